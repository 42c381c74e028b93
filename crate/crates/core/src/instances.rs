//! Reproducible model instances for tests, demos and the CLI.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::lindblad::{Jump, Lindbladian};
use crate::qops::{self, hermitian_part, Operator, C64};
use crate::reduce::{CompositeModel, FastSubsystem, ReduceError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomModelSpec {
    pub num_fast: usize,
    pub dim_a: usize,
    pub dim_b: usize,
    /// Include a random nonzero target generator `ℒ_B`.
    pub target_generator: bool,
    pub epsilon: f64,
}

impl Default for RandomModelSpec {
    fn default() -> Self {
        Self { num_fast: 1, dim_a: 2, dim_b: 3, target_generator: false, epsilon: 0.05 }
    }
}

fn random_op(rng: &mut impl Rng, d: usize, scale: f64) -> Operator {
    Operator::from_fn(d, d, |_, _| C64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
}

/// Random strictly relaxing environment: random Hamiltonian plus two random jumps.
pub fn random_environment(rng: &mut impl Rng, d: usize) -> FastSubsystem {
    let h = hermitian_part(&random_op(rng, d, 1.0));
    let jumps = (0..2)
        .map(|_| Jump::new(random_op(rng, d, 1.0), rng.gen_range(0.3..1.0)))
        .collect();
    let gen = Lindbladian::new(h, jumps).expect("hermitian by construction");
    FastSubsystem::new(gen, random_op(rng, d, 1.0))
}

/// Weighted lowering operator `Σ_n w_n |n−1⟩⟨n|` and `H̃ = c·N + h_0`,
/// which satisfy `[H̃, B†] = c·B†` exactly for any weights.
pub fn random_target(rng: &mut impl Rng, d: usize) -> (Operator, Operator, f64) {
    let mut b = qops::zeros(d);
    for n in 1..d {
        let r = rng.gen_range(0.5..1.5);
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        b[(n - 1, n)] = C64::from_polar(r, phi);
    }
    let c = rng.gen_range(0.5..2.0);
    let h0 = rng.gen_range(-0.5..0.5);
    let h = qops::ops::number(d) * C64::new(c, 0.0) + qops::identity(d) * C64::new(h0, 0.0);
    (b, h, c)
}

pub fn random_target_generator(rng: &mut impl Rng, d: usize) -> Lindbladian {
    let h = hermitian_part(&random_op(rng, d, 0.5));
    Lindbladian::new(h, vec![Jump::new(random_op(rng, d, 1.0), rng.gen_range(0.1..0.5))]).expect("hermitian")
}

/// Seeded random model; retries environments that happen not to relax.
pub fn random_model(seed: u64, spec: RandomModelSpec) -> Result<CompositeModel, ReduceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..16 {
        let fast = (0..spec.num_fast).map(|_| random_environment(&mut rng, spec.dim_a)).collect();
        let (b, h, _) = random_target(&mut rng, spec.dim_b);
        let gen_b = if spec.target_generator {
            random_target_generator(&mut rng, spec.dim_b)
        } else {
            Lindbladian::zero(spec.dim_b)
        };
        match CompositeModel::new(fast, b, h, gen_b, spec.epsilon) {
            Ok(m) => return Ok(m),
            Err(ReduceError::Lindblad(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(ReduceError::InvalidModel("could not draw a relaxing random environment".into()))
}

/// `copies` identical copies of one random environment coupled to a common target.
pub fn identical_copies(seed: u64, copies: usize, dim_b: usize, epsilon: f64) -> Result<CompositeModel, ReduceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let env = random_environment(&mut rng, 2);
    let (b, h, _) = random_target(&mut rng, dim_b);
    CompositeModel::new(vec![env; copies], b, h, Lindbladian::zero(dim_b), epsilon)
}

/// Environment that does not couple (`A = 0`): every correction vanishes.
pub fn decoupled_model(dim_b: usize, epsilon: f64) -> Result<CompositeModel, ReduceError> {
    let gen = Lindbladian::new(qops::zeros(2), vec![Jump::new(qops::ops::sigma_minus(), 1.0)])?;
    let env = FastSubsystem::new(gen, qops::zeros(2));
    let b = qops::ops::annihilation(dim_b);
    let h = qops::ops::number(dim_b);
    CompositeModel::new(vec![env], b, h, Lindbladian::zero(dim_b), epsilon)
}
