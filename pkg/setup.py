"""
proplab - concave multi-asset propagator toolkit
"""
from setuptools import setup
from pathlib import Path

# Read the contents of README file
this_directory = Path(__file__).parent
long_description = (this_directory / "README.md").read_text(encoding='utf-8')

setup(
    name="proplab",
    version="0.1.0",
    description="Concave multi-asset propagator estimation, shape projection and evaluation",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=["core", "market", "estimator", "projection", "proxy", "simulator", "evaluation"],
    py_modules=["main", "cli", "config_loader"],
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
    ],
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.8",
        "pandas>=1.5",
        "pydantic>=2.0.0",
        "pyyaml>=6.0",
        "rich>=13.0.0",
        "python-dotenv>=1.0.0",
    ],
    extras_require={
        "dev": [
            "pytest>=7.0.0",
            "black>=23.0.0",
            "flake8>=6.0.0",
            "mypy>=1.0.0",
        ],
    },
    entry_points={
        "console_scripts": [
            "proplab=main:main",
        ],
    },
    keywords=[
        "market-impact",
        "propagator",
        "ridge-regression",
        "convex-projection",
        "metaorder",
    ],
)
