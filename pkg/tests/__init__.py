# Tests para h2mor - Reducción de orden de modelos en la norma H2
