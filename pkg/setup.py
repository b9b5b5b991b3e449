from setuptools import find_packages, setup

setup(
    name='FORMHOM',
    packages=find_packages(include=["FORMHOM","FORMHOM.forms","FORMHOM.homog","FORMHOM.util"]),
    version='0.1.0',
    description='Stochastic homogenization of differential forms on triadic cubes',
    author='onehalfatsquared',
    license='MIT',
    test_suite='testing',
    install_requires=['numpy','pandas','scipy>=1.12'],
    entry_points={'console_scripts': ['formhom = FORMHOM.analyze:main']}
)
