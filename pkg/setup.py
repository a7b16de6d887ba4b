import setuptools

with open("README.rst", "r") as fh:
    long_description = fh.read()

setuptools.setup(
    name="soft_annihilation",
    version="0.0.1",
    packages=setuptools.find_packages(exclude=["tests", "examples*"]),
    long_description=long_description,
    entry_points={
        'console_scripts': ['softann=soft_annihilation.cli:main']
    },
    include_package_data=True,
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: Apache Software License",
        "Operating System :: OS Independent",
    ],
    python_requires='>=3.8',
    install_requires = [
        'numpy>=1.22',
        'scipy>=1.8',
    ],
    extras_require={
        'test': ['pytest'],
    },
)
