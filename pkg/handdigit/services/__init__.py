"""Service layer: image processing, hand geometry and tree learning."""
