# Low-resource translation lab
