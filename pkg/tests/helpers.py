import numpy as np


def orthogonal_design(m: int, q: int, rng: np.random.Generator) -> np.ndarray:
    """m x q design with orthogonal columns of squared norm m."""
    Q, _ = np.linalg.qr(rng.standard_normal((m, q)))
    return np.sqrt(m) * Q


def conjugate_posterior(X, y, sigma2, prior_var, noise_cov=None):
    """Closed-form `beta | y` for `y ~ N(X beta, sigma2 I + noise_cov)`, `beta ~ N(0, prior_var I)`."""
    n, p = X.shape
    C = sigma2 * np.eye(n) + (np.zeros((n, n)) if noise_cov is None else noise_cov)
    Cinv_X = np.linalg.solve(C, X)
    precision = X.T @ Cinv_X + np.eye(p) / prior_var
    cov = np.linalg.inv(precision)
    mean = cov @ (Cinv_X.T @ y)
    return mean, cov
