from setuptools import setup, find_packages

setup(
    name="escapepath",
    version="0.1.0",
    packages=find_packages(include=['escapepath', 'escapepath.*']),
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.9",
        "pandas>=2.0.0",
        "python-dotenv>=1.1.1"
    ],
    extras_require={"plot": ["plotly>=5.0.0"]},
    entry_points={"console_scripts": ["escapepath=escapepath.cli:main"]},
    python_requires=">=3.9",
)
