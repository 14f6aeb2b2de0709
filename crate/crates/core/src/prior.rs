//! Per-target descriptor selection counts and mean importance weights
//! observed for a chat-model selector over the QM9 corpus. Offline selector
//! backends draw their proposals from this table.

use alloc::vec::Vec;

use crate::descriptor::DescriptorKind;
use crate::target::TargetProperty;

/// Selection counts and mean normalized importances for one target, in
/// [`DescriptorKind::ALL`] order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorRow {
    pub target: TargetProperty,
    pub counts: [u32; 9],
    pub importance: [f64; 9],
}

pub const SELECTION_PRIOR: [PriorRow; 9] = [
    PriorRow {
        target: TargetProperty::Mu,
        counts: [2340, 2734, 21597, 13378, 14935, 16893, 8134, 18146, 79],
        importance: [0.26, 0.26, 0.28, 0.24, 0.22, 0.24, 0.23, 0.29, 0.18],
    },
    PriorRow {
        target: TargetProperty::Alpha,
        counts: [951, 2328, 22223, 14576, 6458, 9241, 18344, 15816, 81],
        importance: [0.26, 0.27, 0.31, 0.26, 0.20, 0.21, 0.25, 0.28, 0.18],
    },
    PriorRow {
        target: TargetProperty::Homo,
        counts: [2661, 3548, 21205, 15724, 9942, 10478, 16430, 11820, 190],
        importance: [0.27, 0.27, 0.34, 0.31, 0.23, 0.23, 0.30, 0.27, 0.21],
    },
    PriorRow {
        target: TargetProperty::Lumo,
        counts: [2185, 3194, 19068, 16700, 9680, 13294, 17484, 10650, 175],
        importance: [0.26, 0.26, 0.28, 0.82, 0.22, 0.23, 0.25, 0.26, 0.20],
    },
    PriorRow {
        target: TargetProperty::Gap,
        counts: [1455, 2537, 20497, 16425, 8570, 9592, 17726, 10453, 157],
        importance: [0.26, 0.64, 0.31, 0.26, 0.23, 0.22, 0.28, 0.28, 0.18],
    },
    PriorRow {
        target: TargetProperty::R2,
        counts: [1001, 1544, 22064, 7553, 3022, 5992, 21634, 21964, 117],
        importance: [0.27, 0.28, 0.39, 0.25, 0.21, 0.22, 0.28, 0.29, 0.19],
    },
    PriorRow {
        target: TargetProperty::Zpve,
        counts: [1115, 2594, 23092, 9477, 10249, 10335, 16997, 15379, 113],
        importance: [0.26, 0.28, 0.35, 0.24, 0.27, 0.25, 0.26, 0.31, 0.18],
    },
    PriorRow {
        target: TargetProperty::U0,
        counts: [1116, 2668, 22606, 11769, 10563, 10494, 15230, 11980, 83],
        importance: [0.26, 0.44, 0.35, 0.29, 0.23, 0.23, 0.28, 0.27, 0.17],
    },
    PriorRow {
        target: TargetProperty::U298,
        counts: [728, 1614, 23925, 14419, 12016, 9394, 15722, 13073, 74],
        importance: [0.25, 0.28, 0.33, 0.26, 0.22, 0.23, 0.24, 0.27, 0.18],
    },
];

pub fn prior_for(target: TargetProperty) -> &'static PriorRow {
    SELECTION_PRIOR
        .iter()
        .find(|r| r.target == target)
        .expect("prior table covers every target")
}

impl PriorRow {
    /// The `n` most frequently selected descriptors, most frequent first.
    pub fn top(&self, n: usize) -> Vec<DescriptorKind> {
        let mut order: Vec<usize> = (0..9).collect();
        order.sort_by(|&a, &b| self.counts[b].cmp(&self.counts[a]).then(a.cmp(&b)));
        order.into_iter().take(n).map(|i| DescriptorKind::ALL[i]).collect()
    }

    /// Importance-proportional weights for `subset`, normalized to sum to one.
    pub fn weights_for(&self, subset: &[DescriptorKind]) -> Vec<f64> {
        let raw: Vec<f64> = subset.iter().map(|k| self.importance[k.index()]).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}
