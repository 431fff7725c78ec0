# OO Access Predictor
# Static prediction of object field-access patterns, validated against traces

__version__ = "0.1.0"
