from pathlib import Path

from setuptools import find_packages, setup

install_requires = [
    "numpy>=1.22",
    "scipy>=1.8",
    "Pillow>=9.0",
    'typing-extensions>=4; python_version<"3.11"',
]

setup(
    name="taxoseg",
    version=__import__("taxoseg").__version__,
    packages=find_packages(
        exclude=(
            "examples",
            "tests",
            "typing_tests",
            "tests.integration",
            "bench",
        )
    ),
    description="Taxonomy-aware hierarchical inference and evaluation for plant segmentation maps",
    long_description=Path("README.rst").read_text("utf-8"),
    long_description_content_type="text/x-rst",
    zip_safe=False,
    license="MIT",
    keywords="python segmentation taxonomy hierarchical agriculture weeds evaluation",
    python_requires=">=3.10",
    install_requires=install_requires,
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Programming Language :: Python",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering :: Image Recognition",
        "License :: OSI Approved :: MIT License",
    ],
    extras_require={
        "signals": ["blinker>=1.3,<2.0"],
    },
    entry_points={
        "console_scripts": ["taxoseg=taxoseg.cli:main"],
    },
    package_data={"taxoseg": ["py.typed", "taxonomies/*.json"]},
)
