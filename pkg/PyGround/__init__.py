__all__ = [
    'base',
    'codec',
    'config',
    'dataset',
    'encoders',
    'errors',
    'evaluator',
    'media',
    'model',
    'recipes',
    'templates',
    'tokenizer',
    'trainer',
    'worlds',
    ]

__version__ = '0.1.0'
