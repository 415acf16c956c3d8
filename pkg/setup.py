#!/usr/bin/env python
from setuptools import find_packages, setup


def _parse_requirements():
    requirements = []

    for line in open("requirements.txt").readlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        requirements.append(line)
    return requirements


INSTALL_REQUIRES = _parse_requirements()

setup(
    name="anisocap",
    use_scm_version=True,
    setup_requires=["setuptools_scm"],
    description="Numerical toolkit for anisotropic capillary surfaces in the half-space",
    packages=find_packages(include=["anisocap", "anisocap.*"]),
    include_package_data=True,
    install_requires=INSTALL_REQUIRES,
    extras_require=dict(dev=["pytest", "ipdb"]),
    entry_points=dict(console_scripts=["anisocap=anisocap.cli:main"]),
    python_requires=">=3.8",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    zip_safe=False,
)
