# Prandtl blowup - numerical laboratory for the axis-restricted Prandtl system
