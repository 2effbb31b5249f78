#!/usr/bin/env python3
"""
Setup script for the emotion-conditioned translation pipeline
"""
from setuptools import setup, find_packages

setup(
    name="emomt",
    version="0.1.0",
    description="Fine-tuning and evaluation pipeline for emotion-conditioned English-French translation",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    install_requires=[
        "numpy>=1.21.0",
        "python-slugify>=5.0.0",
        "requests>=2.25.0",
        "torch>=2.0.0",
    ],
    extras_require={
        "comet": ["unbabel-comet>=2.0.0"],
        "test": ["pytest>=7.0.0", "sacrebleu>=2.0.0"],
    },
    entry_points={
        "console_scripts": [
            "emomt=emomt.cli:main",
        ],
    },
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
    python_requires=">=3.8",
)
