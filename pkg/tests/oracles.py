"""Independent reference implementations used as test oracles.

Everything here is written directly from the metric definitions with plain
Python loops, deliberately sharing no code with the package: bins are
half-open intervals tested by comparison, kernel sums and ranking
statistics are O(N^2) loops.
"""

import math


def ece_brute(confidence, correct, m):
    """Count-weighted mean |bin accuracy - bin confidence| over equal-width bins."""
    n = len(confidence)
    total = 0.0
    for k in range(1, m + 1):
        lo, hi = (k - 1) / m, k / m
        members = [i for i in range(n)
                   if (lo < confidence[i] <= hi) or (k == 1 and confidence[i] == 0.0)]
        if not members:
            continue
        acc = sum(1.0 for i in members if correct[i]) / len(members)
        conf = sum(confidence[i] for i in members) / len(members)
        total += len(members) / n * abs(acc - conf)
    return total


def mce_brute(confidence, correct, m):
    n = len(confidence)
    worst = 0.0
    for k in range(1, m + 1):
        lo, hi = (k - 1) / m, k / m
        members = [i for i in range(n)
                   if (lo < confidence[i] <= hi) or (k == 1 and confidence[i] == 0.0)]
        if not members:
            continue
        acc = sum(1.0 for i in members if correct[i]) / len(members)
        conf = sum(confidence[i] for i in members) / len(members)
        worst = max(worst, abs(acc - conf))
    return worst


def equal_mass_groups(confidence, m):
    """Stable sort by confidence, then M contiguous groups differing by <= 1
    in size (the first N % M groups take the extra sample)."""
    n = len(confidence)
    order = sorted(range(n), key=lambda i: (confidence[i], i))
    base, extra = divmod(n, m)
    groups = []
    start = 0
    for k in range(m):
        size = base + (1 if k < extra else 0)
        if size:
            groups.append(order[start:start + size])
        start += size
    return groups


def ada_ece_brute(confidence, correct, m):
    n = len(confidence)
    total = 0.0
    for group in equal_mass_groups(confidence, m):
        acc = sum(1.0 for i in group if correct[i]) / len(group)
        conf = sum(confidence[i] for i in group) / len(group)
        total += len(group) / n * abs(acc - conf)
    return total


def classwise_ece_brute(probs, labels, m):
    """Average over classes of the per-column calibration gap; every sample
    contributes its probability for every class."""
    n = len(probs)
    k_classes = len(probs[0])
    total = 0.0
    for k in range(k_classes):
        conf = [probs[i][k] for i in range(n)]
        hit = [1.0 if labels[i] == k else 0.0 for i in range(n)]
        total += ece_brute(conf, [h == 1.0 for h in hit], m)
    return total / k_classes


def smece_brute(confidence, correct, h=0.05):
    n = len(confidence)
    total = 0.0
    for i in range(n):
        num = den = 0.0
        for j in range(n):
            w = math.exp(-((confidence[i] - confidence[j]) ** 2) / (2.0 * h * h))
            num += w * (1.0 if correct[j] else 0.0)
            den += w
        total += abs(num / den - confidence[i])
    return total / n


def auroc_brute(confidence, correct):
    pos = [confidence[i] for i in range(len(confidence)) if correct[i]]
    neg = [confidence[i] for i in range(len(confidence)) if not correct[i]]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def pearson_brute(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    num = sum((x[i] - mx) * (y[i] - my) for i in range(n))
    dx = math.sqrt(sum((v - mx) ** 2 for v in x))
    dy = math.sqrt(sum((v - my) ** 2 for v in y))
    return num / (dx * dy)


def ranks_with_ties(values):
    order = sorted(range(len(values)), key=lambda i: (values[i], i))
    ranks = [0.0] * len(values)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_brute(x, y):
    return pearson_brute(ranks_with_ties(list(x)), ranks_with_ties(list(y)))


def softmax_list(z):
    m = max(z)
    e = [math.exp(v - m) for v in z]
    s = sum(e)
    return [v / s for v in e]


def combined_loss_brute(logits, s, label, lam):
    """CE + lam * Brier at scale s, written independently of the package."""
    p = softmax_list([v / s for v in logits])
    ce = -math.log(p[label])
    br = sum((p[c] - (1.0 if c == label else 0.0)) ** 2 for c in range(len(p)))
    return ce + lam * br


def central_diff(f, x, eps):
    return (f(x + eps) - f(x - eps)) / (2.0 * eps)
