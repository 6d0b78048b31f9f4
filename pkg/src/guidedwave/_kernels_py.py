"""Pure-NumPy versions of the sampler step kernels.

Reference implementation for the compiled extension: same functions, same
operation order. Works on arrays of any shape (the compiled kernels only
accept contiguous 1-D float64, which the backend dispatcher checks).
"""


def lincomb(a, x, b, y):
    return a * x + b * y


def ddpm_update(x_t, x0_hat, noise, c0, c1, std):
    return c0 * x0_hat + c1 * x_t + std * noise


def scaled_diff(x_t, x0_hat, alpha, sigma):
    return (x_t - alpha * x0_hat) / sigma


def diag_posterior(x, mean, gain, alpha):
    return mean + gain * (x - alpha * mean)
