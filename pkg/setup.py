from setuptools import setup

setup(
    name='wce',
    ext_package='',
    packages=['wce'],
    package_data={'wce': ['data/**/*']},
    install_requires=['torch', 'numpy', 'scipy', 'scikit-learn', 'tqdm'],
    extras_require={'test': ['pytest']},
    entry_points={'console_scripts': ['wce=wce.cli:main']},
)
