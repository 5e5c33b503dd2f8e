# Pan-sharpening by alternating reverse filtering
__version__ = "1.0.0"
