"""Anderson impurity models on emulated quantum circuits.

Submodules: ``model``, ``bath``, ``mps``, ``dmrg``, ``circuit``, ``qsd``,
``compiler``, ``emulator``, ``gf``, ``ed``, ``pipeline``, ``cli``. They are
not imported here so that ``aimqc --threads`` can configure BLAS first.
"""

__version__ = "0.1.0"
