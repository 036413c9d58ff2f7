"""
Bounds on t(N), the largest t such that N! is a product of N factors each at least t.

Modules: interval (rational enclosures), ntheory (sieves and prime estimates),
certify (certificate formats and verifiers), greedy, linprog, upperbound,
rearrange, repair and constants.
"""
