"""
Regenerate critical_values.py, the table of two-tailed Bonferroni-Dunn
critical values q_alpha.

Comparing k - 1 methods against a control at family-wise level alpha spreads
alpha over k - 1 two-tailed tests, so

    q_alpha = z(1 - alpha / (2 (k - 1)))

where z is the standard normal quantile. Run this as
`python -m lccmatch.build_data` from the repository root.
"""
import os

from scipy.stats import norm

ALPHAS = (0.05, 0.10)
METHOD_COUNTS = range(2, 11)
DIGITS = 4

GENERATED_HEADER = "# This file is generated by build_data.py."


def write_python_dict(outfile, name, d):
    print(f"{name} = {{", file=outfile)
    for key in sorted(d):
        value = d[key]
        print(f"    {key!r}: {value!r},", file=outfile)
    print("}", file=outfile)


def bonferroni_dunn_table():
    table = {}
    for alpha in ALPHAS:
        for k in METHOD_COUNTS:
            q = norm.ppf(1 - alpha / (2 * (k - 1)))
            table[(alpha, k)] = round(float(q), DIGITS)
    return table


def build_data():
    table = bonferroni_dunn_table()
    out_path = os.path.join(os.path.dirname(__file__), 'critical_values.py')
    with open(out_path, 'w', encoding='utf-8') as outfile:
        print(GENERATED_HEADER, file=outfile)
        print("# Keys are (alpha, number of methods).\n", file=outfile)
        write_python_dict(outfile, 'BONFERRONI_DUNN_Q', table)


if __name__ == '__main__':
    build_data()
