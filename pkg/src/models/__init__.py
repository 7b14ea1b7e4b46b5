"""Problem parameters, meshes and nodal fields."""
