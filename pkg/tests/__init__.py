import logging

# quadrature warnings are captured by the py.warnings logger
logging.getLogger("py.warnings").setLevel(logging.ERROR)
