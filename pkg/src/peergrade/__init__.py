"""Bayesian peer-grading: Gibbs inference, grade explanations and synthetic experiments."""
