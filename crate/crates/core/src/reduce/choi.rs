use crate::qops::{self, kron, min_hermitian_eigenvalue, Operator};

/// `C = Σ_ij map(|i⟩⟨j|) ⊗ |i⟩⟨j|`; the map is completely positive iff `C ⪰ 0`.
pub fn choi_matrix(map: impl Fn(&Operator) -> Operator, dim_in: usize) -> Operator {
    let mut out: Option<Operator> = None;
    for i in 0..dim_in {
        for j in 0..dim_in {
            let e = qops::matrix_unit(dim_in, i, j);
            let term = kron(&map(&e), &e);
            match out.as_mut() {
                Some(acc) => *acc += term,
                None => out = Some(term),
            }
        }
    }
    out.unwrap_or_else(|| qops::zeros(0))
}

/// Smallest eigenvalue of the Hermitian part of a Choi matrix.
pub fn choi_min_eigenvalue(choi: &Operator) -> f64 {
    min_hermitian_eigenvalue(choi)
}
