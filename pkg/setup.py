__version__ = '0.1.0-dev'

import os

from setuptools import find_packages
from setuptools import setup


here = os.path.abspath(os.path.dirname(__file__))
try:
    README = open(os.path.join(here, 'README.rst')).read()
except BaseException:  # doesn't work under tox/pip
    README = ''

install_requires = [
    'numpy>=1.22',
    'scipy>=1.8',
    'Chameleon>=4.4.0',
    'importlib-metadata;python_version<"3.10"',
]


setup(
    name="sigma2r",
    version=__version__,
    description="Training lab for density-aware feature losses.",
    long_description=README,
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Programming Language :: Python :: 3.13",
        "Programming Language :: Python :: Implementation :: CPython",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
    license='BSD-like (http://repoze.org/license.html)',
    packages=find_packages('src'),
    package_dir={'': 'src'},
    include_package_data=True,
    package_data={
        'sigma2r': [
            'py.typed',
            'templates/*.pt',
        ],
    },
    python_requires='>=3.9',
    install_requires=install_requires,
    extras_require={
        'test': {
            'pytest',
        },
        'docs': {
            'Sphinx',
            'sphinx_rtd_theme',
        },
    },
    entry_points={
        'console_scripts': [
            'sigma2r = sigma2r.cli:main',
        ],
    },
    zip_safe=False,
)
