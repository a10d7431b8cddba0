# =============================================================================
# File 13: setup.py (Optional - per installazione)
# =============================================================================

#!/usr/bin/env python3

from setuptools import setup, find_packages

# Leggi README per long description
def read_readme():
    with open('README.md', 'r', encoding='utf-8') as f:
        return f.read()

# Leggi requirements (pytest escluso dall'installazione)
def read_requirements():
    with open('requirements.txt', 'r') as f:
        return [line.strip() for line in f
                if line.strip() and not line.startswith('#') and not line.startswith('pytest')]

setup(
    name='vscg',
    version='1.0.0',
    description='Audio-visual event localization with video-level semantic consistency guidance',
    long_description=read_readme(),
    long_description_content_type='text/markdown',
    packages=find_packages(include=['src', 'src.*']),
    classifiers=[
        'Development Status :: 4 - Beta',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
    python_requires='>=3.9',
    install_requires=read_requirements(),
    extras_require={'dev': ['pytest>=7.0.0']},
    entry_points={
        'console_scripts': [
            'vscg=src.main:main',
        ],
    },
)
