#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""The setup script."""

from setuptools import find_packages, setup  # type: ignore[import]

with open("README.rst") as readme_file:
    readme = readme_file.read()

with open("HISTORY.rst") as history_file:
    history = history_file.read()

requirements = [
    "Click>=7.1",
    "networkx>=2.4",
    "numpy>=1.22",
    "pandas>=1.4",
    "python-dotenv>=0.15.0",
    "scipy>=1.9",
]

setup(
    author="dcmminfer developers",
    python_requires=">=3.8",
    classifiers=[
        "Development Status :: 2 - Pre-Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Natural Language :: English",
        "Programming Language :: Python :: 3 :: Only",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    description=(
        "Mixed membership estimation and inference for degree-corrected "
        "mixed membership networks."
    ),
    entry_points={
        "console_scripts": [
            "dcmminfer=dcmminfer.cli:main",
        ],
    },
    install_requires=requirements,
    license="MIT",
    long_description=readme + "\n\n" + history,
    long_description_content_type="text/x-rst",
    include_package_data=True,
    keywords="dcmminfer mixed-membership network spectral inference",
    name="dcmminfer",
    packages=find_packages(include=["dcmminfer", "dcmminfer.*"]),
    package_data={"dcmminfer": ["py.typed"]},
    test_suite="tests",
    # fmt: off
    version='0.1.0',
    # fmt: on
    zip_safe=False,
)
