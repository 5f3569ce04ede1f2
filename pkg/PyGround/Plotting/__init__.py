__all__ = [
    'colors',
    'dataset',
    'grace',
    'graph',
    ]
