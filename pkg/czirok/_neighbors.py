"""Sumas de vecinos para el núcleo top-hat en el toro [0, L).

Las dos variantes devuelven (num, den) con
    num_i = sum_j u_j phi(|x_j - x_i|),   den_i = sum_j phi(|x_j - x_i|)
incluyendo j = i. El orden de suma por agente es fijo, así que el resultado
no depende del número de hilos que ejecuten barridos en paralelo.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def direct_sums(x, u, L, r, amp):
    n = x.shape[0]
    num = np.zeros(n)
    den = np.zeros(n)
    half = 0.5 * L
    for i in range(n):
        acc_u = 0.0
        acc_w = 0.0
        xi = x[i]
        for j in range(n):
            d = abs(x[j] - xi)
            if d > half:
                d = L - d
            if d <= r:
                acc_u += u[j] * amp
                acc_w += amp
        num[i] = acc_u
        den[i] = acc_w
    return num, den


@njit(cache=True, nogil=True)
def cell_list_sums(x, u, L, r, amp):
    n = x.shape[0]
    ncell = int(L // r)
    width = L / ncell
    half = 0.5 * L

    # ordenamiento por casillas (estable en el índice del agente)
    cell = np.empty(n, dtype=np.int64)
    counts = np.zeros(ncell + 1, dtype=np.int64)
    for i in range(n):
        c = int(x[i] / width)
        if c >= ncell:
            c = ncell - 1
        cell[i] = c
        counts[c + 1] += 1
    for c in range(ncell):
        counts[c + 1] += counts[c]
    fill = counts[:-1].copy()
    order = np.empty(n, dtype=np.int64)
    for i in range(n):
        c = cell[i]
        order[fill[c]] = i
        fill[c] += 1

    num = np.zeros(n)
    den = np.zeros(n)
    for i in range(n):
        acc_u = 0.0
        acc_w = 0.0
        xi = x[i]
        for dc in range(-1, 2):
            cc = (cell[i] + dc) % ncell
            for p in range(counts[cc], counts[cc + 1]):
                j = order[p]
                d = abs(x[j] - xi)
                if d > half:
                    d = L - d
                if d <= r:
                    acc_u += u[j] * amp
                    acc_w += amp
        num[i] = acc_u
        den[i] = acc_w
    return num, den
