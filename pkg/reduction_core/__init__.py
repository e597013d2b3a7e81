# Núcleo de reducción de orden de modelos en la norma H2
