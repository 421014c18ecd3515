//! Frozen column layouts of every CSV the runner writes.

pub struct Table {
    pub file: &'static str,
    pub command: &'static str,
    pub columns: &'static [(&'static str, &'static str)],
}

pub const DISORDER: Table = Table {
    file: "disorder.csv",
    command: "flow",
    columns: &[("sample", "disorder seed"), ("site", "0-based site"), ("theta", "random field on the site")],
};

pub const SCALES: Table = Table {
    file: "scales.csv",
    command: "flow",
    columns: &[
        ("sample", "disorder seed"),
        ("k", "scale index"),
        ("norm_V", "operator norm of the off-diagonal part at scale k"),
        ("norm_A", "operator norm of the generator that produced scale k (0 at k = 0)"),
        ("n_terms", "number of monomials in the off-diagonal part"),
        ("nr1_events", "small-denominator violations at this scale"),
        ("nr2_events", "large-generator violations at this scale"),
        ("floor_events", "denominators replaced by the floor"),
        ("spectrum_drift", "largest eigenvalue shift against the dense Hamiltonian (empty above the dense cutoff)"),
    ],
};

pub const RESONANCES: Table = Table {
    file: "resonances.csv",
    command: "flow",
    columns: &[
        ("sample", "disorder seed"),
        ("k", "scale index"),
        ("kind", "NR_I, NR_II or denominator-floor"),
        ("descriptor", "active sites and support of the offending term"),
        ("value", "measured quantity"),
        ("threshold", "bound it was compared against"),
    ],
};

pub const LIOM_RESIDUALS: Table = Table {
    file: "liom_residuals.csv",
    command: "liom-profile",
    columns: &[("sample", "disorder seed"), ("site", "0-based site"), ("residual", "norm of the commutator of the rotated Z with H")],
};

pub const LOCALITY_TAILS: Table = Table {
    file: "locality_tails.csv",
    command: "liom-profile",
    columns: &[
        ("sample", "disorder seed"),
        ("operator", "name of the rotated operator"),
        ("n", "distance from the original support"),
        ("tail_norm", "norm of the part first reaching distance n"),
    ],
};

pub const COUPLING_DECAY: Table = Table {
    file: "coupling_decay.csv",
    command: "liom-profile",
    columns: &[
        ("sample", "disorder seed"),
        ("diameter", "distance between the outermost sites of the Z product plus one, 0 for the constant"),
        ("max_abs_D", "largest coupling magnitude at this diameter"),
    ],
};

pub const RESONANCE_SCAN: Table = Table {
    file: "resonance_scan.csv",
    command: "resonance-scan",
    columns: &[
        ("seed", "disorder seed"),
        ("epsilon", "non-resonance parameter"),
        ("length", "support length of the diagrams"),
        ("diagrams", "diagrams tested"),
        ("violations", "diagrams whose smallest denominator is below epsilon^length"),
        ("frequency", "violations / diagrams"),
    ],
};

pub const CENSUS: Table = Table {
    file: "census.csv",
    command: "diagram-count",
    columns: &[
        ("x", "leftmost site of the diagram domain"),
        ("k", "scale"),
        ("w", "bare order"),
        ("N", "factorial-weighted count as an exact fraction"),
        ("fitted_C", "smallest C with N <= C^w over all rows"),
    ],
};

pub const TRANSPORT: Table = Table {
    file: "transport.csv",
    command: "transport-sweep",
    columns: &[
        ("L", "chain length"),
        ("seed", "disorder and bath seed"),
        ("bath_family", "two-level or four-level"),
        ("T", "final time of the average"),
        ("avg_current", "time-averaged expectation of the current"),
        ("energy_residual", "drift of the total energy between time 0 and T"),
        ("identity_residual", "mismatch between avg_current and the left energy change divided by T"),
    ],
};

pub const SPECTRAL_LEMMA: Table = Table {
    file: "spectral_lemma.csv",
    command: "lemma-checks",
    columns: &[
        ("d", "matrix dimension"),
        ("epsilon", "size of the lower triangle"),
        ("trials", "random draws"),
        ("max_ratio", "largest distance to the diagonal spectrum divided by epsilon"),
        ("bound", "constant the ratio must not exceed"),
    ],
};

pub const RESOLVENT: Table = Table {
    file: "resolvent_identity.csv",
    command: "lemma-checks",
    columns: &[
        ("depth", "number of increment rows and columns"),
        ("trials", "random families"),
        ("resampled", "draws rejected for a near-zero denominator"),
        ("max_abs_residual", "largest double-precision residual"),
        ("max_rel_residual", "same, relative to the sum of term magnitudes"),
        ("exact_failures", "families where the identity fails in exact arithmetic"),
    ],
};

pub const ALL: &[&Table] = &[
    &DISORDER,
    &SCALES,
    &RESONANCES,
    &LIOM_RESIDUALS,
    &LOCALITY_TAILS,
    &COUPLING_DECAY,
    &RESONANCE_SCAN,
    &CENSUS,
    &TRANSPORT,
    &SPECTRAL_LEMMA,
    &RESOLVENT,
];

impl Table {
    pub fn header(&self) -> Vec<&'static str> {
        self.columns.iter().map(|c| c.0).collect()
    }
}

/// Text of `SCHEMA.md`.
pub fn markdown() -> String {
    let mut s = String::from(
        "# Output schema\n\nGenerated by `mblflow schema`. Column order is frozen. Floats are written in scientific notation with 17 significant digits; an empty cell means the value was not computed.\n\nEvery run also writes `manifest.json`.\n",
    );
    for t in ALL {
        s.push_str(&format!("\n## {}\n\nWritten by `{}`.\n\n| column | meaning |\n|---|---|\n", t.file, t.command));
        for (name, doc) in t.columns {
            s.push_str(&format!("| {name} | {doc} |\n"));
        }
    }
    s
}
