from setuptools import setup

setup(
    name = "PyGround",
    version = "0.1.0",
    description = "Desk-scale multi-modal grounding with relative coordinates",
    packages = ['PyGround',
                'PyGround.Extensions',
                'PyGround.Plotting',
                'PyGround.Scripts',
                'PyGround.Examples',
                'PyGround.Tests',
                ],
    scripts=['PyGround/Scripts/pg_ground'],
    python_requires='>=3.8',
    install_requires=['numpy>=1.20',
                      'torch>=1.13',
                      'PyYAML>=5.4',
                      'tqdm>=4.60',
                      ],
    extras_require={'test': ['pytest>=7'],
                    },

)
