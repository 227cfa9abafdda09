DELTA = 0.0
