#!/usr/bin/env python
"""This module contains setup instructions for broadwell-lab."""
import codecs
import os

from setuptools import setup

here = os.path.abspath(os.path.dirname(__file__))

with codecs.open(os.path.join(here, "README.md"), encoding="utf-8") as fh:
    long_description = "\n" + fh.read()

with open(os.path.join(here, "broadwell", "version.py")) as fp:
    exec(fp.read())

setup(
    name="broadwell-lab",
    version=__version__,  # noqa: F821
    packages=["broadwell"],
    package_data={"": ["LICENSE"],},
    license="The Unlicense (Unlicense)",
    install_requires=["numpy>=1.20", "scipy>=1.6"],
    extras_require={"test": ["pytest"]},
    entry_points={
        "console_scripts": [
            "broadwell = broadwell.cli:main"],},
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Environment :: Console",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: The Unlicense (Unlicense)",
        "Natural Language :: English",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Topic :: Scientific/Engineering :: Physics",
    ],
    description=("Numerical lab for the two-dimensional Broadwell kinetic model."),
    include_package_data=True,
    long_description_content_type="text/markdown",
    long_description=long_description,
    zip_safe=True,
    python_requires=">=3.8",
    keywords=["broadwell", "kinetic", "boltzmann", "blow-up", "semi-lagrangian",],
)
