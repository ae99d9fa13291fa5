# Licensed under a 3-clause BSD style license - see LICENSE.rst
from setuptools import setup

try:
    from testr.setup_helper import cmdclass
except ImportError:
    cmdclass = {}

setup(
    name="dpwkit",
    description="Loop group factorizations and the DPW method for harmonic maps",
    packages=["dpwkit", "dpwkit.tests"],
    python_requires=">=3.10",
    install_requires=["numpy", "scipy"],
    tests_require=["pytest", "hypothesis"],
    extras_require={"test": ["pytest", "hypothesis", "testr"]},
    entry_points={"console_scripts": ["dpwkit=dpwkit.cli:main"]},
    use_scm_version=True,
    setup_requires=["setuptools_scm", "setuptools_scm_git_archive"],
    cmdclass=cmdclass,
)
