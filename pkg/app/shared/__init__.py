# Shared components
