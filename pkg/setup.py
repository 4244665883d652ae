from setuptools import setup, find_packages

setup(
    name="gclgame",
    setup_requires=["setuptools_scm"],
    use_scm_version=True,
    python_requires=">=3.8, <4",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    entry_points={"console_scripts": ["gclgame = gclgame._cli:main"]},
    install_requires=[
        'ansimarkup>=1.4,<2',
        'atomicwrites>=1.3.0,<2',
        'braceexpand>=0.1.5,<1',
        'click>=7.0,<9',
        'filelock>=3.0.12,<4',
        'jinja2>=2.10.3,<4',
        'numpy>=1.20,<3',
        'pandas>=1.2,<3',
        'pyparsing>=2.4.5,<4',
        'scipy>=1.6,<2',
        'zope.interface>=4.7.1,<7',
    ],
)
