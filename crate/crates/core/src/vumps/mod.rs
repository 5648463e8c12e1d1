//! Variational fixed-point ground-state search for the MPO Hamiltonian in
//! the space of uniform MPS at fixed bond dimension.
//!
//! Each iteration (i) recomputes the MPO-dressed left/right environments as
//! deflated fixed points, (ii) solves the effective one-site and zero-site
//! eigenproblems for every unit-cell site with warm-started Lanczos, and
//! (iii) regauges via polar decompositions. The error measure is
//! `max_i ||A_C[i] - A_L[i] C[i]||` (and the right-handed counterpart), and
//! the energy per site comes from the linear-growth term of the environment
//! fixed-point equations.

mod env;

use ndarray::{Array2, Array3, ArrayView1};

use crate::error::{Error, Result};
use crate::linalg::{dagger, lowest_eigpair, polar_left, polar_right, LinearMap};
use crate::model::{Mpo, CELL, MPO_DIM};
use crate::umps::{
    absorb_right, flatten, mat_l, mat_r, random_umps, unflatten, unmat_l, unmat_r, UniformMps,
};
use crate::C64;

/// Outcome of a ground-state search. `converged` distinguishes a solution
/// meeting the requested tolerance from a partial result at `max_iter`.
#[derive(Debug, Clone)]
pub struct GroundStateResult {
    pub state: UniformMps,
    pub energy_per_site: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

/// Effective one-site Hamiltonian acting on the center tensor.
struct AcMap<'a> {
    l: &'a [Array2<C64>],
    r: &'a [Array2<C64>],
    mpo: &'a Mpo,
    chi: usize,
}

impl LinearMap for AcMap<'_> {
    fn dim_in(&self) -> usize {
        self.chi * crate::model::PHYS_DIM * self.chi
    }

    fn dim_out(&self) -> usize {
        self.dim_in()
    }

    fn apply(&self, v: ArrayView1<C64>) -> ndarray::Array1<C64> {
        let d = crate::model::PHYS_DIM;
        let b = v
            .to_owned()
            .into_shape_with_order((self.chi, d, self.chi))
            .expect("center tensor shape");
        // Pre-contract L[a] with B(s) for the block values that occur.
        let mut lb: Vec<Vec<Option<Array2<C64>>>> = vec![vec![None; d]; MPO_DIM];
        let mut out = Array3::<C64>::zeros((self.chi, d, self.chi));
        for (ai, bi, op) in self.mpo.entries() {
            for sb in 0..d {
                for sk in 0..d {
                    let w = op[(sb, sk)];
                    if w.norm() == 0.0 {
                        continue;
                    }
                    if lb[*ai][sk].is_none() {
                        let bs = b.index_axis(ndarray::Axis(1), sk).to_owned();
                        lb[*ai][sk] = Some(self.l[*ai].dot(&bs));
                    }
                    let left = lb[*ai][sk].as_ref().expect("just filled");
                    let term = left.dot(&self.r[*bi]).mapv(|z| z * w);
                    let mut slice = out.index_axis_mut(ndarray::Axis(1), sb);
                    slice.zip_mut_with(&term, |o, &t| *o += t);
                }
            }
        }
        ndarray::Array1::from_iter(out.iter().cloned())
    }
}

/// Effective zero-site Hamiltonian acting on a bond matrix.
struct CMap<'a> {
    l: &'a [Array2<C64>],
    r: &'a [Array2<C64>],
    chi: usize,
}

impl LinearMap for CMap<'_> {
    fn dim_in(&self) -> usize {
        self.chi * self.chi
    }

    fn dim_out(&self) -> usize {
        self.dim_in()
    }

    fn apply(&self, v: ArrayView1<C64>) -> ndarray::Array1<C64> {
        let x = unflatten(v, self.chi, self.chi);
        let mut out = Array2::<C64>::zeros((self.chi, self.chi));
        for a in 0..MPO_DIM {
            out += &self.l[a].dot(&x).dot(&self.r[a]);
        }
        flatten(&out)
    }
}

/// Ground state of `mpo` at bond dimension `chi`.
///
/// `init` supplies a warm start (its bond dimension must equal `chi`);
/// otherwise a seeded random state is used. Non-convergence within
/// `max_iter` returns a partial result with `converged = false`; NaN
/// anywhere is a hard error.
pub fn vumps_ground_state(
    mpo: &Mpo,
    chi: usize,
    tol: f64,
    max_iter: usize,
    init: Option<UniformMps>,
    seed: u64,
) -> Result<GroundStateResult> {
    if tol <= 0.0 {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let state = match init {
        Some(s) => {
            if s.chi() != chi {
                return Err(Error::invalid(format!(
                    "warm start has chi {} but {chi} was requested",
                    s.chi()
                )));
            }
            s
        }
        None => random_umps(chi, seed)?,
    };
    // Exactly-zero Schmidt directions (fresh from a bond-dimension growth)
    // make the polar gauge ill-defined and stall the fixed-point iteration;
    // floor them at a level far below any physical tolerance.
    let state = floor_schmidt_weights(&state, 1e-8)?;

    let d = crate::model::PHYS_DIM;
    let mut a_l: [Array3<C64>; CELL] = [state.a_l(0).clone(), state.a_l(1).clone()];
    let mut a_r: [Array3<C64>; CELL] = [state.a_r(0).clone(), state.a_r(1).clone()];
    let mut c: [Array2<C64>; CELL] = [state.c(0).clone(), state.c(1).clone()];

    let mut grad = 1.0f64;
    let mut energy = f64::NAN;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut warm_l: Option<Array2<C64>> = None;
    let mut warm_r: Option<Array2<C64>> = None;

    for iter in 0..=max_iter {
        let rho_r = c[1].dot(&dagger(&c[1]));
        let rho_l = dagger(&c[1]).dot(&c[1]);
        let env_tol = (grad * 1e-3).clamp(1e-12, 1e-4);
        let le = env::left_env(mpo, &[&a_l[0], &a_l[1]], &rho_r, warm_l.as_ref(), env_tol)?;
        let re = env::right_env(mpo, &[&a_r[0], &a_r[1]], &rho_l, warm_r.as_ref(), env_tol)?;
        warm_l = Some(le.bond1[crate::model::MPO_DONE].clone());
        warm_r = Some(re.bond1[crate::model::MPO_START].clone());
        energy = 0.25 * (le.e_cell + re.e_cell);
        if !energy.is_finite() {
            return Err(Error::NonFinite { op: "vumps energy" });
        }

        // Tangent-space gradient: the component of H_AC(A_C) outside the
        // isometry column span of A_L (and the row span of A_R). Immune to
        // the additive constants left undetermined by the environment
        // solves, and meaningful down to chi = 1.
        let mut g = 0.0f64;
        for site in 0..CELL {
            let (lac, rac) = blocks_for_site(&le, &re, site);
            let ac_map = AcMap {
                l: lac,
                r: rac,
                mpo,
                chi,
            };
            let ac = absorb_right(&a_l[site], &c[site]);
            let hac = ac_map.apply(flatten_tensor(&ac).view());
            let hac = unflatten_tensor(&hac, chi);

            let hm = mat_l(&hac);
            let alm = mat_l(&a_l[site]);
            let proj = alm.dot(&dagger(&alm).dot(&hm));
            g = g.max(crate::umps::frob(&(&hm - &proj)));

            let hm = mat_r(&hac);
            let arm = mat_r(&a_r[site]);
            let proj = (hm.dot(&dagger(&arm))).dot(&arm);
            g = g.max(crate::umps::frob(&(&hm - &proj)));
        }
        grad = g;
        if !grad.is_finite() {
            return Err(Error::NonFinite { op: "vumps gradient" });
        }
        if std::env::var_os("DQCPWM_TRACE").is_some() && iter % 10 == 0 {
            eprintln!("  iter {iter:4}: grad {grad:.3e} e {energy:.10}");
        }
        if grad < tol {
            converged = true;
            iterations = iter;
            break;
        }
        if iter == max_iter {
            iterations = iter;
            break;
        }
        iterations = iter + 1;

        // Sequential per-site update: solve the effective problems for one
        // site with fresh environments, regauge that site, then move on.
        // Converges markedly better than the simultaneous update near the
        // transition.
        let tol_eig = (0.1 * grad * grad).clamp(1e-13, 1e-5);
        let mut le_cur = le;
        let mut re_cur = re;
        for site in 0..CELL {
            if site > 0 {
                let rho_r = c[1].dot(&dagger(&c[1]));
                let rho_l = dagger(&c[1]).dot(&c[1]);
                le_cur =
                    env::left_env(mpo, &[&a_l[0], &a_l[1]], &rho_r, warm_l.as_ref(), env_tol)?;
                re_cur =
                    env::right_env(mpo, &[&a_r[0], &a_r[1]], &rho_l, warm_r.as_ref(), env_tol)?;
                warm_l = Some(le_cur.bond1[crate::model::MPO_DONE].clone());
                warm_r = Some(re_cur.bond1[crate::model::MPO_START].clone());
            }
            let (l_blocks, r_blocks) = blocks_for_site(&le_cur, &re_cur, site);
            let map = AcMap {
                l: l_blocks,
                r: r_blocks,
                mpo,
                chi,
            };
            let v0 = flatten_tensor(&absorb_right(&a_l[site], &c[site]));
            let (_, vec) = lowest_eigpair(&map, v0.view(), tol_eig, 80)?;
            let ac = vec
                .into_shape_with_order((chi, d, chi))
                .expect("center tensor shape");
            // Bond matrices to the right and to the left of this site.
            let mut cms: Vec<Array2<C64>> = Vec::new();
            for bond in [site, (site + CELL - 1) % CELL] {
                let (lb, rb) = blocks_for_bond(&le_cur, &re_cur, bond);
                let map = CMap { l: lb, r: rb, chi };
                let v0 = flatten(&c[bond]);
                let (_, vec) = lowest_eigpair(&map, v0.view(), tol_eig, 80)?;
                let m = unflatten(vec.view(), chi, chi);
                let n = crate::umps::frob(&m);
                cms.push(m.mapv(|z| z / n));
            }
            let cc = cms.remove(0);
            let cp = cms.remove(0);
            let ul = polar_left(&mat_l(&ac))?;
            let uc = polar_left(&cc)?;
            a_l[site] = unmat_l(&ul.dot(&dagger(&uc)), chi);
            let ur = polar_right(&mat_r(&ac))?;
            let ucp = polar_right(&cp)?;
            a_r[site] = unmat_r(&dagger(&ucp).dot(&ur), chi);
            c[site] = cc;
            c[(site + CELL - 1) % CELL] = cp;
        }

        for t in a_l.iter().chain(a_r.iter()) {
            if !t.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NonFinite { op: "vumps iteration" });
            }
        }
    }

    let state = UniformMps::from_parts(a_l, a_r, c)?;
    Ok(GroundStateResult {
        state,
        energy_per_site: energy,
        gradient_norm: grad,
        iterations,
        converged,
        seed,
    })
}

/// Replaces each center matrix by one whose singular values are at least
/// `floor` (then renormalized). A no-op for generic states; used to unstick
/// warm starts whose Schmidt spectrum has exact zeros.
fn floor_schmidt_weights(state: &UniformMps, floor: f64) -> Result<UniformMps> {
    let chi = state.chi();
    let mut needs_fix = false;
    for bond in 0..CELL {
        let (_, s, _) = crate::linalg::svd(state.c(bond))?;
        if s.iter().any(|x| *x < floor) {
            needs_fix = true;
        }
    }
    if !needs_fix {
        return Ok(state.clone());
    }
    let mut c_new: Vec<Array2<C64>> = Vec::with_capacity(CELL);
    for bond in 0..CELL {
        let (u, s, vh) = crate::linalg::svd(state.c(bond))?;
        let mut us = u;
        for j in 0..chi {
            let w = s[j].max(floor);
            for v in us.column_mut(j).iter_mut() {
                *v *= w;
            }
        }
        let m = us.dot(&vh);
        let n = crate::umps::frob(&m);
        c_new.push(m.mapv(|z| z / n));
    }
    UniformMps::from_parts(
        [state.a_l(0).clone(), state.a_l(1).clone()],
        [state.a_r(0).clone(), state.a_r(1).clone()],
        [c_new.remove(0), c_new.remove(0)],
    )
}

fn blocks_for_site<'a>(
    le: &'a env::EnvBlocks,
    re: &'a env::EnvBlocks,
    site: usize,
) -> (&'a [Array2<C64>], &'a [Array2<C64>]) {
    if site == 0 {
        (&le.bond1, &re.bond0)
    } else {
        (&le.bond0, &re.bond1)
    }
}

fn blocks_for_bond<'a>(
    le: &'a env::EnvBlocks,
    re: &'a env::EnvBlocks,
    bond: usize,
) -> (&'a [Array2<C64>], &'a [Array2<C64>]) {
    if bond == 0 {
        (&le.bond0, &re.bond0)
    } else {
        (&le.bond1, &re.bond1)
    }
}

fn unflatten_tensor(v: &ndarray::Array1<C64>, chi: usize) -> Array3<C64> {
    v.to_owned()
        .into_shape_with_order((chi, crate::model::PHYS_DIM, chi))
        .expect("center tensor shape")
}


/// Energy per site of an arbitrary mixed-canonical state, from the
/// environment linear-growth term (averaged between the two sides).
pub fn environment_energy(state: &UniformMps, mpo: &Mpo) -> Result<f64> {
    let rho_r = state.c(1).dot(&dagger(state.c(1)));
    let rho_l = dagger(state.c(1)).dot(state.c(1));
    let le = env::left_env(mpo, &[state.a_l(0), state.a_l(1)], &rho_r, None, 1e-12)?;
    let re = env::right_env(mpo, &[state.a_r(0), state.a_r(1)], &rho_l, None, 1e-12)?;
    Ok(0.25 * (le.e_cell + re.e_cell))
}

fn flatten_tensor(t: &Array3<C64>) -> ndarray::Array1<C64> {
    ndarray::Array1::from_iter(t.iter().cloned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_mpo, ModelParams};

    #[test]
    fn product_state_limit_is_exact() {
        // K = 0, chi = 1: the best product state is polarized along z and
        // saturates the bound e = -jz.
        let mpo = build_mpo(ModelParams::new(0.5, 1.5, 0.0)).unwrap();
        let res = vumps_ground_state(&mpo, 1, 1e-10, 500, None, 3).unwrap();
        assert!(res.converged, "grad {}", res.gradient_norm);
        assert!(
            (res.energy_per_site + 1.5).abs() < 1e-9,
            "energy {}",
            res.energy_per_site
        );
    }

    #[test]
    fn variational_monotonicity_in_chi() {
        let mpo = build_mpo(ModelParams::new(0.5, 1.5, 0.54)).unwrap();
        let r12 = vumps_ground_state(&mpo, 12, 1e-8, 400, None, 5).unwrap();
        let warm = r12.state.grow_bond_dimension(24).unwrap();
        let r24 = vumps_ground_state(&mpo, 24, 1e-8, 400, Some(warm), 5).unwrap();
        assert!(r24.energy_per_site <= r12.energy_per_site + 1e-12);
    }

    #[test]
    fn reproducible_across_runs() {
        let mpo = build_mpo(ModelParams::new(0.5, 1.5, 0.3)).unwrap();
        let a = vumps_ground_state(&mpo, 8, 1e-9, 300, None, 11).unwrap();
        let b = vumps_ground_state(&mpo, 8, 1e-9, 300, None, 11).unwrap();
        assert!((a.energy_per_site - b.energy_per_site).abs() < 1e-10);
    }

    #[test]
    fn gauge_invariants_on_result() {
        let mpo = build_mpo(ModelParams::new(0.5, 1.5, 0.54)).unwrap();
        let res = vumps_ground_state(&mpo, 8, 1e-8, 300, None, 2).unwrap();
        let g = res.state.gauge_residuals();
        assert!(g.left < 1e-10 && g.right < 1e-10, "{g:?}");
        assert!(g.consistency < 10.0 * res.gradient_norm.max(1e-8), "{g:?}");
    }
}
