use crate::scalar::Scalar;

/// A distinct eigenvalue and its multiplicity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralLevel<T> {
    pub value: T,
    pub multiplicity: usize,
}

/// Groups sorted eigenvalues into levels; values within `rel_tol` (relative to
/// the level's first member) are merged.
pub fn group_levels<T: Scalar>(sorted: &[T], rel_tol: T) -> Vec<SpectralLevel<T>> {
    let mut levels: Vec<SpectralLevel<T>> = Vec::new();
    for &v in sorted {
        match levels.last_mut() {
            Some(last) if (v - last.value).abs() <= rel_tol * last.value.abs().max(T::one()) => {
                last.multiplicity += 1
            }
            _ => levels.push(SpectralLevel {
                value: v,
                multiplicity: 1,
            }),
        }
    }
    levels
}
