"""Two-sample permutation testing for samples of networks."""
