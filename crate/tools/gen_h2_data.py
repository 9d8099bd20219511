"""Regenerate the bundled H2 data under data/h2/.

Requires pyscf. Produces:
  hamiltonian.json   qubit Hamiltonian (STO-3G, R = 1.2 A, UHF spin-orbital basis, Jordan-Wigner)
  ref1.json          ansatz circuit for the first reference (UHF-1 + UMP2 doubles)
  ref2.json          ansatz circuit for the second reference (UHF-2 doubles + orbital rotation into UHF-1 basis)
  groups.json        Pauli equivalence tables for the Hadamard-test measurement
  oracle.json        dense-oracle numbers used only for cross-checking

Conventions: qubit 0 is the most significant bit; spin orbitals are ordered
(0a, 0b, 1a, 1b); a_p = Z^(p) (x) |0><1| (x) I.
"""
import itertools
import json
import os
import sys

import numpy as np
import scipy.linalg as sl
from pyscf import gto, mp, scf

R = 1.2
OUT = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "data", "h2")
N = 4
D = 2**N

I2 = np.eye(2)
Z = np.diag([1.0, -1.0])
X = np.array([[0, 1], [1, 0.0]])
Y = np.array([[0, -1j], [1j, 0]])
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}
LOWER = np.array([[0, 1], [0, 0.0]])


def kron(*mats):
    r = np.eye(1)
    for m in mats:
        r = np.kron(r, m)
    return r


def word(w):
    return kron(*[PAULI[c] for c in w])


ann = [kron(*([Z] * p + [LOWER] + [I2] * (N - p - 1))) for p in range(N)]
cre = [a.T for a in ann]


def hamiltonian(mol, mf):
    ca, cb = mf.mo_coeff
    orbs = [ca[:, 0], cb[:, 0], ca[:, 1], cb[:, 1]]
    spin = [0, 1, 0, 1]
    h = mol.intor("int1e_kin") + mol.intor("int1e_nuc")
    eri = mol.intor("int2e")
    H = mol.energy_nuc() * np.eye(D, dtype=complex)
    for p, q in itertools.product(range(N), repeat=2):
        if spin[p] == spin[q]:
            H += (orbs[p] @ h @ orbs[q]) * cre[p] @ ann[q]
    for p, q, r, s in itertools.product(range(N), repeat=4):
        if spin[p] == spin[q] and spin[r] == spin[s]:
            v = np.einsum("a,b,c,d,abcd", orbs[p], orbs[q], orbs[r], orbs[s], eri)
            if v != 0:
                H += 0.5 * v * cre[p] @ cre[r] @ ann[s] @ ann[q]
    terms = []
    for w in itertools.product("IXYZ", repeat=N):
        w = "".join(w)
        c = np.trace(word(w) @ H) / D
        if abs(c) > 1e-10:
            terms.append((w, c))
    return H, terms


def op_on(u, qubits):
    k = len(qubits)
    m = np.zeros((D, D), complex)
    for col in range(D):
        bits = [(col >> (N - 1 - q)) & 1 for q in range(N)]
        sub = 0
        for q in qubits:
            sub = (sub << 1) | bits[q]
        for out in range(2**k):
            amp = u[out, sub]
            if amp == 0:
                continue
            nb = bits[:]
            for i, q in enumerate(qubits):
                nb[q] = (out >> (k - 1 - i)) & 1
            m[sum(b << (N - 1 - q) for q, b in enumerate(nb)), col] += amp
    return m


def givens(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[1, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1]])


GATES = {
    "X": lambda p: X,
    "CNOT": lambda p: np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]]),
    "CZ": lambda p: np.diag([1, 1, 1, -1]),
    "GIVENS": lambda p: givens(p[0]),
}


def run(gates, v):
    for g in gates:
        v = op_on(GATES[g["name"]](g.get("params", [])), g["qubits"]) @ v
    return v


def gate(name, qubits, params=()):
    return {"name": name, "qubits": list(qubits), "params": [float(x) for x in params]}


def double_excitation(theta):
    # c|1100> - s|0011> restricted to the HF sector
    return [
        gate("CNOT", [0, 1]),
        gate("CNOT", [2, 3]),
        gate("GIVENS", [0, 2], [theta]),
        gate("CNOT", [2, 3]),
        gate("CNOT", [0, 1]),
    ]


def basis(i):
    v = np.zeros(D)
    v[i] = 1
    return v


def classes(terms, bl, br):
    """Groups terms whose matrix blocks on the given supports agree up to a phase.

    Terms with an identically zero block are listed under "vanishing".
    """
    out = []
    vanishing = []
    for w, _ in terms:
        m = bl.conj().T @ word(w) @ br
        if np.abs(m).max() < 1e-12:
            vanishing.append(w)
            continue
        for c in out:
            hit = [f for f in (1, -1, 1j, -1j) if np.allclose(m, f * c["m"])]
            if hit:
                c["members"].append((w, hit[0]))
                break
        else:
            out.append({"m": m, "members": [(w, 1)]})
    return {
        "classes": [
            {
                "representative": c["members"][0][0],
                "members": [
                    {"pauli": w, "factor_re": float(np.real(f)), "factor_im": float(np.imag(f))}
                    for w, f in c["members"]
                ],
            }
            for c in out
        ],
        "vanishing": vanishing,
    }


def main():
    os.makedirs(OUT, exist_ok=True)
    mol = gto.M(atom=f"H 0 0 0; H 0 0 {R}", basis="sto-3g", verbose=0)
    u1 = scf.UHF(mol)
    u1.kernel((np.diag([1.0, 0]), np.diag([0.0, 1])))
    u2 = scf.UHF(mol)
    u2.kernel((np.diag([0.0, 1]), np.diag([1.0, 0])))

    H, terms = hamiltonian(mol, u1)
    json.dump(
        {
            "num_qubits": N,
            "unit": "Hartree",
            "terms": [{"pauli": w, "re": float(c.real), "im": float(c.imag)} for w, c in terms],
        },
        open(os.path.join(OUT, "hamiltonian.json"), "w"),
        indent=1,
    )

    hf = basis(0b1100)
    t1 = mp.UMP2(u1).run().t2[1][0, 0, 0, 0]
    t2 = mp.UMP2(u2).run().t2[1][0, 0, 0, 0]

    def uccd(t):
        T = t * cre[2] @ cre[3] @ ann[1] @ ann[0]
        return sl.expm(T - T.T)

    ovlp = mol.intor("int1e_ovlp")
    ua = u1.mo_coeff[0].T @ ovlp @ u2.mo_coeff[0]
    ub = u1.mo_coeff[1].T @ ovlp @ u2.mo_coeff[1]
    # fix the arbitrary MO signs so both rotations are proper
    if np.linalg.det(ua) < 0:
        ua[:, 1] *= -1
    if np.linalg.det(ub) < 0:
        ub[:, 1] *= -1
    phi_a = np.arctan2(ua[1, 0], ua[0, 0])
    phi_b = np.arctan2(ub[1, 0], ub[0, 0])

    def rot(u, modes):
        k = sl.logm(u).real
        g = sum(k[i, j] * cre[p] @ ann[q] for i, p in enumerate(modes) for j, q in enumerate(modes))
        return sl.expm(g)

    psi1 = uccd(t1) @ hf
    psi2 = rot(ua, [0, 2]) @ rot(ub, [1, 3]) @ uccd(t2) @ hf

    th1 = -np.arctan2(psi1[0b0011], psi1[0b1100])
    own2 = uccd(t2) @ hf
    th2 = -np.arctan2(own2[0b0011], own2[0b1100])
    ref1 = double_excitation(th1)
    ref2 = None
    for sa, sb in itertools.product((1, -1), repeat=2):
        cand = double_excitation(th2) + [
            gate("CZ", [1, 2]),
            gate("GIVENS", [0, 2], [sa * phi_a]),
            gate("GIVENS", [1, 3], [sb * phi_b]),
            gate("CZ", [1, 2]),
        ]
        if abs(run(cand, hf) @ psi2 - 1) < 1e-9:
            ref2 = cand
    assert abs(run(ref1, hf) @ psi1 - 1) < 1e-9
    assert ref2 is not None
    for lbl, g in (("psi_1", ref1), ("psi_2", ref2)):
        json.dump(
            {"num_qubits": N, "label": lbl, "gates": g},
            open(os.path.join(OUT, f"ref{lbl[-1]}.json"), "w"),
            indent=1,
        )

    # symmetry-adapted supports of the two references
    left = np.array([basis(0b1100), basis(0b0011)]).T
    right = np.array([basis(0b1100), basis(0b0011), (basis(0b1001) - basis(0b0110)) / np.sqrt(2)]).T
    groups = {
        "off_diagonal": {"pair": ["psi_1", "psi_2"], **classes(terms, left, right)},
        "diagonal": {
            "psi_1": classes(terms, left, left),
            "psi_2": classes(terms, right, right),
        },
    }
    json.dump(groups, open(os.path.join(OUT, "groups.json"), "w"), indent=1)

    hm = np.array([[psi1 @ H @ psi1, psi1 @ H @ psi2], [psi2 @ H @ psi1, psi2 @ H @ psi2]]).real
    sm = np.array([[1, psi1 @ psi2], [psi2 @ psi1, 1]])
    oracle = {
        "fci": float(np.linalg.eigvalsh(H)[0]),
        "uhf": float(u1.e_tot),
        "noqe": [float(e) for e in sl.eigh(hm, sm)[0]],
        "h": hm.tolist(),
        "s12": float(sm[0, 1]),
    }
    json.dump(oracle, open(os.path.join(OUT, "oracle.json"), "w"), indent=1)
    print(json.dumps(oracle, indent=1))
    print({k: len(v["classes"]) for k, v in groups["diagonal"].items()}, len(groups["off_diagonal"]["classes"]))


if __name__ == "__main__":
    main()
