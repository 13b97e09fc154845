# Command-line surface: gen, train, infer, eval
