from setuptools import setup, find_packages

setup(
    name='diagnet',
    version='0.1.0',
    description='A desk-scale object detector using diagonal constraints on the adjacency matrix of a GCN neck.',
    author='MiloTruck',
    packages=find_packages(exclude=['tests', 'tests.*']),
    python_requires=">=3.10",
    install_requires=['numpy', 'Pillow'],
    include_package_data=True,
    extras_require={
        'dev': ['pytest']
    },
    entry_points={
        'console_scripts': [
            'diagnet=diagnet.__main__:main'
        ]
    },
)
