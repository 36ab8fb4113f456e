"""Bayesian clustering of SPD matrices with a mixture of finite mixtures of Wisharts."""
