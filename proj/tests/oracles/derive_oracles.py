#!/usr/bin/env python3
# Copyright 2026 The cbdebug Authors.
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Independent reference values frozen into the C++ unit tests.

Nothing here shares code with the library: numpy / scikit-learn compute the
quantities from their textbook definitions. Re-run and paste if a fixture
changes.
"""

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import roc_auc_score


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def cbm_loss():
    W = np.array([[0.5, -0.3, 0, 0], [0, 0, 0.8, 0.2], [0.1, 0.4, -0.6, 0.3]])
    b = np.array([0.1, -0.2, 0.05])
    H = np.array([[1.0, -0.5, 0.3], [-0.7, 0.6, 0.0]])
    c = np.array([0.2, -0.1])
    x = np.array([[1, 0.5, -1, 2], [0, -1, 0.5, 0.5], [2, 1, 1, -1],
                  [-0.5, 0.3, 0.7, 0]])
    y = np.array([0, 1, 1, 0])
    w = np.array([1, 2, 0.5, 0.5])
    forget = np.array([[1, 0, 0, 0], [0, 0, 1, -1.0]])

    def total(mask, lam_s, lam_f):
        phi = sigmoid(x @ W.T + b) * mask
        z = phi @ H.T + c
        z -= z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        ce = -(w * logp[np.arange(4), y]).mean()
        l1 = lam_s * np.abs(H * mask).sum()
        resp = (forget @ W.T) * mask
        fg = lam_f * (resp ** 2).sum() / (forget.shape[0] * mask.sum())
        return ce + l1 + fg

    print("loss plain      %.17g" % total(np.ones(3), 0, 0))
    print("loss l1 0.1     %.17g" % total(np.ones(3), 0.1, 0))
    print("loss full       %.17g" % total(np.ones(3), 0.1, 0.5))
    print("loss masked c1  %.17g" % total(np.array([1, 0, 1.0]), 0.1, 0.5))


def auroc():
    s = [0.1, 0.4, 0.35, 0.8, 0.65, 0.5, 0.5, 0.2]
    t = [0, 0, 1, 1, 1, 0, 1, 0]
    print("auroc           %.17g" % roc_auc_score(t, s))


def discriminator():
    y = np.array([0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 1])
    yp = np.array([1, 0, 1, 0, 0, 1, 0, 1, 0, 1, 1, 0])
    v = np.array([0.9, 0.8, 0.7, 1.0, 0.2, 0.1, 0.3, 0.2, 0.9, 0.0, 0.6, 0.4])
    l2 = 0.1

    def feats(lab, vals):
        oh = np.eye(2)[lab]
        return np.column_stack([oh, vals, oh * vals[:, None]])

    f = np.vstack([feats(y, v), feats(yp, v)])
    t = np.r_[np.zeros(12), np.ones(12)]
    # mean logloss + l2/2 |w|^2  <=>  C = 1 / (l2 * N)
    clf = LogisticRegression(C=1.0 / (l2 * len(t)), tol=1e-12, max_iter=10000)
    clf.fit(f, t)
    for lab, vv in [(0, 0.9), (1, 0.9), (0, 0.1), (1, 0.1)]:
        row = feats(np.array([lab]), np.array([vv]))
        print("eta y=%d v=%.1f   %.17g" % (lab, vv, clf.predict_proba(row)[0, 1]))


def dependence():
    v = np.array([0.9, 0.8, 0.1, 0.7, 0.2, 0.3])
    y = np.array([0, 0, 1, 0, 1, 1])
    u = np.array([1.0, 2.0, 0.5, 1.5, 1.0, 3.0])
    w = u / u.mean()
    for k in (0, 1):
        yk = (y == k).astype(float)
        for name, ww in (("unweighted", np.ones(6)), ("weighted", w)):
            dv = v - np.average(v, weights=ww)
            dy = yk - np.average(yk, weights=ww)
            cov = np.average(dv * dy, weights=ww)
            corr = cov / np.sqrt(np.average(dv ** 2, weights=ww) *
                                 np.average(dy ** 2, weights=ww))
            print("cov %s k=%d %.17g corr %.17g" % (name, k, cov, corr))


if __name__ == "__main__":
    cbm_loss()
    auroc()
    discriminator()
    dependence()
