"""Offline oracle for the statistics fixtures in tests/unit/test_stats.cpp.

Recomputes every frozen value with mpmath at 50 digits (and cross-checks
with scipy where scipy implements the same formula). Run with
`python3 tests/oracles/stats_oracles.py`; the printed literals are pasted
into the test file.
"""
import mpmath as mp
from scipy import stats

mp.mp.dps = 50

A = [2.1, 3.4, 1.9, 5.6, 4.4, 3.3, 2.8]
B = [1.2, 0.8, 2.5, 1.9, 0.4, 1.1]
D = [0.5, -0.2, 1.3, 0.9, 0.1, 0.7, 1.1, -0.4]
G = [[4.1, 5.2, 3.9, 4.8, 5.0], [6.3, 5.9, 7.1, 6.6], [3.2, 2.9, 4.0, 3.5, 3.1, 3.8]]
Y = [5.0, 4.6, 4.9, 4.1, 3.8, 3.9, 3.2, 3.0, 2.7, 2.9]


def mean(x):
    return mp.fsum(x) / len(x)


def var(x):
    m = mean(x)
    return mp.fsum((v - m) ** 2 for v in x) / (len(x) - 1)


def t_two_sided(t, dof):
    # 2 * P(T > |t|) = I_{dof/(dof+t^2)}(dof/2, 1/2)
    x = dof / (dof + t * t)
    return mp.betainc(dof / 2, mp.mpf(1) / 2, 0, x, regularized=True)


def f_survival(f, d1, d2):
    x = d2 / (d2 + d1 * f)
    return mp.betainc(d2 / 2, d1 / 2, 0, x, regularized=True)


def kolmogorov_q(lam):
    return 2 * mp.nsum(lambda k: (-1) ** (k - 1) * mp.exp(-2 * k * k * lam * lam), [1, mp.inf])


def show(name, v):
    print(f"{name} = {mp.nstr(v, 17)}")


a = [mp.mpf(str(v)) for v in A]
b = [mp.mpf(str(v)) for v in B]
va, vb = var(a) / len(a), var(b) / len(b)
t = (mean(a) - mean(b)) / mp.sqrt(va + vb)
dof = (va + vb) ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
show("welch_t", t)
show("welch_dof", dof)
show("welch_p", t_two_sided(t, dof))
print("  scipy:", stats.ttest_ind(A, B, equal_var=False))

xs = sorted(a)
ys = sorted(b)
pts = sorted(set(xs + ys))
dks = max(abs(mp.mpf(sum(1 for v in xs if v <= p)) / len(xs) - mp.mpf(sum(1 for v in ys if v <= p)) / len(ys)) for p in pts)
en = mp.sqrt(mp.mpf(len(xs) * len(ys)) / (len(xs) + len(ys)))
show("ks_d", dks)
show("ks_p", kolmogorov_q((en + mp.mpf("0.12") + mp.mpf("0.11") / en) * dks))
print("  scipy D:", stats.ks_2samp(A, B).statistic)

d = [mp.mpf(str(v)) for v in D]
tp = mean(d) / mp.sqrt(var(d) / len(d))
show("paired_t", tp)
show("paired_p", t_two_sided(tp, len(d) - 1))
print("  scipy:", stats.ttest_1samp(D, 0.0))

g = [[mp.mpf(str(v)) for v in grp] for grp in G]
allv = [v for grp in g for v in grp]
grand = mean(allv)
ssb = mp.fsum(len(grp) * (mean(grp) - grand) ** 2 for grp in g)
ssw = mp.fsum((v - mean(grp)) ** 2 for grp in g for v in grp)
d1 = len(g) - 1
d2 = len(allv) - len(g)
F = (ssb / d1) / (ssw / d2)
show("anova_f", F)
show("anova_p", f_survival(F, d1, d2))
print("  scipy:", stats.f_oneway(*G))

y = [mp.mpf(str(v)) for v in Y]
x = [mp.mpf(i) for i in range(len(y))]
mx, my = mean(x), mean(y)
sxx = mp.fsum((xi - mx) ** 2 for xi in x)
slope = mp.fsum((xi - mx) * (yi - my) for xi, yi in zip(x, y)) / sxx
icpt = my - slope * mx
rss = mp.fsum((yi - icpt - slope * xi) ** 2 for xi, yi in zip(x, y))
se = mp.sqrt(rss / (len(y) - 2) / sxx)
show("ols_slope", slope)
show("ols_t", slope / se)
show("ols_p", t_two_sided(slope / se, len(y) - 2))
print("  scipy:", stats.linregress(range(len(Y)), Y))

# Special functions at fixed points.
show("ibeta_2_3_0.4", mp.betainc(2, 3, 0, mp.mpf("0.4"), regularized=True))
show("ibeta_0.5_7.5_0.2", mp.betainc(mp.mpf("0.5"), mp.mpf("7.5"), 0, mp.mpf("0.2"), regularized=True))
show("t_p_2.5_7", t_two_sided(mp.mpf("2.5"), 7))
show("f_sf_3.2_4_20", f_survival(mp.mpf("3.2"), 4, 20))
show("kolmogorov_q_0.8", kolmogorov_q(mp.mpf("0.8")))
