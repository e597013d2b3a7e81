# -*- coding: utf-8 -*-
# Punto de entrada del banco de pruebas h2mor
"""
Uso:
    python main.py run --config experimento.json
    python main.py bode --config experimento.json --rom results/rom_ph2_r6.json
"""
import sys

from reduction_core.cli import main

if __name__ == "__main__":
    sys.exit(main())
