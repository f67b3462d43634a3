"""High-precision reference values frozen into the Rust test suite.

Run with: python3 reference_values.py
"""
import mpmath as mp
import numpy as np
import sympy as sp

mp.mp.dps = 40

print("drm_pdf(w=1,x=2) =", mp.e**-1 / (2 * mp.sqrt(mp.pi)))
for x in [1, 2, mp.sqrt(0.5), 0.3, 3.5, 5.0]:
    print(f"erf({x}) =", mp.erf(x))
print("erfc(sqrt(20)) =", mp.erfc(mp.sqrt(20)))
print("E1(1) =", mp.e1(1))
print("1-exp(-1) =", 1 - mp.e**-1)
print("exp(-2) =", mp.e**-2)
print("1/sqrt(5) =", 1 / mp.sqrt(5))
print("coef(1.5) =", (mp.sqrt(2) * 3.5 + 1) / 5)
print("2/pi =", 2 / mp.pi)

# Laplace identity: substitute p(s) = 1/(1+w s) into (1/(2s))(p+1) int_0^s p
s, w, t = sp.symbols("s w t", positive=True)
p = 1 / (1 + w * t)
rhs = (1 / (2 * s)) * (p.subs(t, s) + 1) * sp.integrate(p, (t, 0, s))
closed = (2 + w * s) / (2 * w * s * (1 + w * s)) * sp.log(1 + w * s)
print("laplace identity residual:", sp.simplify(rhs - closed))

# d_alpha between exponential and Gamma(1/2) equilibria (w=1, alpha=1.5),
# dense log scan of the closed-form transforms.
ss = np.logspace(-6, 6, 1_000_000)
f = lambda v: abs(1 / (1 + v) - 1 / np.sqrt(1 + 2 * v)) / v**1.5
vals = np.abs(1 / (1 + ss) - 1 / np.sqrt(1 + 2 * ss)) / ss**1.5
k = int(np.argmax(vals))
print("d_alpha scan max =", repr(vals[k]), "at s =", repr(ss[k]))
sm = mp.findroot(lambda v: mp.diff(lambda u: abs(1 / (1 + u) - 1 / mp.sqrt(1 + 2 * u)) / u**1.5, v), ss[k])
print("d_alpha refined =", abs(1 / (1 + sm) - 1 / mp.sqrt(1 + 2 * sm)) / sm**1.5, "at", sm)

# Gini of Gamma(k) via Lorenz-curve integration: G = 1 - 2 int_0^1 L(F) dF
for shape in [mp.mpf(1) / 2, mp.mpf(1)]:
    F = lambda x: mp.gammainc(shape, 0, x, regularized=True)
    L = lambda x: mp.gammainc(shape + 1, 0, x, regularized=True)
    g = 1 - 2 * mp.quad(lambda x: L(x) * x ** (shape - 1) * mp.e**-x / mp.gamma(shape), [0, 1, 10, mp.inf])
    print(f"gini(shape={shape}) =", g)
