from setuptools import find_packages, setup

setup(
    name="ccb",
    version="0.1.0",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    install_requires=["numpy>=1.22", "scipy>=1.9"],
    entry_points={
        "console_scripts": [
            "ccb=ccb.ccb:main",
        ],
    },
)
