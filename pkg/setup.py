from setuptools import find_packages, setup

setup(
    name="rotcloud",
    version="0.1.0",
    description="Rotation-prediction self-supervised pretraining for point-cloud encoders",
    long_description=open("README.md", encoding="utf-8").read(),
    long_description_content_type="text/markdown",
    package_dir={"": "src"},
    packages=find_packages(where="src"),
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.24",
        "pandas>=2.1.1",
        "matplotlib>=3.8.0",
        "pydantic>=2.4.2",
        "pydantic-settings>=2.0.3",
        "python-dotenv>=1.0.0",
        "loguru>=0.7.2",
    ],
    extras_require={"dev": ["pytest>=7.4.2"]},
    entry_points={"console_scripts": ["rotcloud=rotcloud.cli:main"]},
)
