"""Variational Bayes for shared-frailty log-logistic AFT models."""
