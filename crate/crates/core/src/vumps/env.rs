use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::linalg::{dagger, gmres, FnMap};
use crate::model::{Mpo, CELL, MPO_DIM, MPO_DONE, MPO_START};
use crate::umps::{env_step_left, env_step_right, flatten, site_mat, unflatten};
use crate::C64;

/// MPO-dressed environment blocks on one side of the chain.
///
/// `bond1` holds the blocks at the unit-cell boundary, `bond0` at the
/// interior bond; `e_cell` is the energy accumulated per unit cell (the
/// linear-growth coefficient removed from the fixed-point equation).
pub(crate) struct EnvBlocks {
    pub bond1: Vec<Array2<C64>>,
    pub bond0: Vec<Array2<C64>>,
    pub e_cell: f64,
}

/// One left-environment step across a site: `L'[b] = sum W[a][b](sb,sk)
/// A(sb)^H L[a] A(sk)`.
fn l_step(blocks: &[Option<Array2<C64>>], a: &Array3<C64>, mpo: &Mpo) -> Vec<Option<Array2<C64>>> {
    let chi = a.dim().0;
    let mats: Vec<Array2<C64>> = (0..a.dim().1).map(|s| site_mat(a, s)).collect();
    let dags: Vec<Array2<C64>> = mats.iter().map(dagger).collect();
    let mut out: Vec<Option<Array2<C64>>> = vec![None; MPO_DIM];
    for (ai, bi, op) in mpo.entries() {
        let Some(l) = &blocks[*ai] else { continue };
        for sb in 0..mats.len() {
            for sk in 0..mats.len() {
                let w = op[(sb, sk)];
                if w.norm() == 0.0 {
                    continue;
                }
                let term = dags[sb].dot(l).dot(&mats[sk]).mapv(|z| z * w);
                match &mut out[*bi] {
                    Some(acc) => *acc += &term,
                    None => out[*bi] = Some(term),
                }
            }
        }
    }
    for slot in out.iter_mut() {
        if slot.is_none() {
            *slot = Some(Array2::zeros((chi, chi)));
        }
    }
    out
}

/// One right-environment step across a site: `R'[a] = sum W[a][b](sb,sk)
/// A(sk) R[b] A(sb)^H`.
fn r_step(blocks: &[Option<Array2<C64>>], a: &Array3<C64>, mpo: &Mpo) -> Vec<Option<Array2<C64>>> {
    let chi = a.dim().0;
    let mats: Vec<Array2<C64>> = (0..a.dim().1).map(|s| site_mat(a, s)).collect();
    let dags: Vec<Array2<C64>> = mats.iter().map(dagger).collect();
    let mut out: Vec<Option<Array2<C64>>> = vec![None; MPO_DIM];
    for (ai, bi, op) in mpo.entries() {
        let Some(r) = &blocks[*bi] else { continue };
        for sb in 0..mats.len() {
            for sk in 0..mats.len() {
                let w = op[(sb, sk)];
                if w.norm() == 0.0 {
                    continue;
                }
                let term = mats[sk].dot(r).dot(&dags[sb]).mapv(|z| z * w);
                match &mut out[*ai] {
                    Some(acc) => *acc += &term,
                    None => out[*ai] = Some(term),
                }
            }
        }
    }
    for slot in out.iter_mut() {
        if slot.is_none() {
            *slot = Some(Array2::zeros((chi, chi)));
        }
    }
    out
}

fn tr_pair(a: &Array2<C64>, b: &Array2<C64>) -> C64 {
    // tr(a b)
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Left MPO environment from the left-canonical tensors.
///
/// The start block is the identity; transient blocks settle after a few cell
/// passes because the automaton has no transient cycles; the done block is
/// the solution of a deflated geometric series `(1 - T_cell) L = Y` with the
/// energy per cell removed.
pub(crate) fn left_env(
    mpo: &Mpo,
    a_l: &[&Array3<C64>; CELL],
    rho_r: &Array2<C64>,
    warm: Option<&Array2<C64>>,
    tol: f64,
) -> Result<EnvBlocks> {
    let chi = a_l[0].dim().0;
    let eye = Array2::<C64>::eye(chi);

    // Transient blocks at the cell boundary.
    let mut blocks: Vec<Option<Array2<C64>>> = vec![None; MPO_DIM];
    blocks[MPO_START] = Some(eye.clone());
    for _pass in 0..4 {
        let mut next = blocks.clone();
        next[MPO_DONE] = None; // accumulator handled separately
        let mut cur = next;
        for site in 0..CELL {
            cur = l_step(&cur, a_l[site], mpo);
            cur[MPO_START] = Some(eye.clone());
        }
        cur[MPO_DONE] = None;
        blocks = cur;
        blocks[MPO_START] = Some(eye.clone());
    }

    // Per-cell inhomogeneity entering the done block.
    let mut with_zero_done = blocks.clone();
    with_zero_done[MPO_DONE] = Some(Array2::zeros((chi, chi)));
    let mut cur = with_zero_done;
    for site in 0..CELL {
        cur = l_step(&cur, a_l[site], mpo);
        cur[MPO_START] = Some(eye.clone());
    }
    let y = cur[MPO_DONE].clone().expect("done block present");

    let e_cell = tr_pair(&y, rho_r);
    if e_cell.im.abs() > 1e-6 * (1.0 + e_cell.re.abs()) {
        return Err(Error::Solver(format!(
            "left environment energy has imaginary part {:.3e}",
            e_cell.im
        )));
    }
    let ybar = &y - &eye.mapv(|z| z * e_cell);

    // Solve (1 - T_cell + |I><rho|) L = Ybar, matrix-free.
    let op = FnMap {
        dim: chi * chi,
        f: |v: ndarray::ArrayView1<C64>| {
            let x = unflatten(v, chi, chi);
            let mut tx = x.clone();
            for site in 0..CELL {
                tx = env_step_right(&tx, a_l[site]);
            }
            let defl = tr_pair(&x, rho_r);
            let out = &x - &tx + &eye.mapv(|z| z * defl);
            flatten(&out)
        },
    };
    let rhs = flatten(&ybar);
    let x0 = warm.map(flatten);
    let (sol, _res) = gmres(
        &op,
        rhs.view(),
        x0.as_ref().map(|v| v.view()),
        tol,
        40,
        200,
    )?;
    let done = unflatten(sol.view(), chi, chi);

    let mut bond1: Vec<Array2<C64>> = blocks
        .iter()
        .map(|b| b.clone().unwrap_or_else(|| Array2::zeros((chi, chi))))
        .collect();
    bond1[MPO_DONE] = done;

    // Interior bond: one step across site 0.
    let opt: Vec<Option<Array2<C64>>> = bond1.iter().cloned().map(Some).collect();
    let bond0 = l_step(&opt, a_l[0], mpo)
        .into_iter()
        .map(|b| b.expect("filled"))
        .collect();

    Ok(EnvBlocks {
        bond1,
        bond0,
        e_cell: e_cell.re,
    })
}

/// Right MPO environment from the right-canonical tensors (mirror image of
/// [`left_env`]).
pub(crate) fn right_env(
    mpo: &Mpo,
    a_r: &[&Array3<C64>; CELL],
    rho_l: &Array2<C64>,
    warm: Option<&Array2<C64>>,
    tol: f64,
) -> Result<EnvBlocks> {
    let chi = a_r[0].dim().0;
    let eye = Array2::<C64>::eye(chi);

    let mut blocks: Vec<Option<Array2<C64>>> = vec![None; MPO_DIM];
    blocks[MPO_DONE] = Some(eye.clone());
    for _pass in 0..4 {
        let mut cur = blocks.clone();
        cur[MPO_START] = None;
        for site in [1usize, 0] {
            cur = r_step(&cur, a_r[site], mpo);
            cur[MPO_DONE] = Some(eye.clone());
        }
        cur[MPO_START] = None;
        blocks = cur;
        blocks[MPO_DONE] = Some(eye.clone());
    }

    let mut with_zero_start = blocks.clone();
    with_zero_start[MPO_START] = Some(Array2::zeros((chi, chi)));
    let mut cur = with_zero_start;
    for site in [1usize, 0] {
        cur = r_step(&cur, a_r[site], mpo);
        cur[MPO_DONE] = Some(eye.clone());
    }
    let y = cur[MPO_START].clone().expect("start block present");

    let e_cell = {
        // tr(rho_l y): rho_l is stored as [bra, ket], y as [ket, bra].
        tr_pair(&y, rho_l)
    };
    if e_cell.im.abs() > 1e-6 * (1.0 + e_cell.re.abs()) {
        return Err(Error::Solver(format!(
            "right environment energy has imaginary part {:.3e}",
            e_cell.im
        )));
    }
    let ybar = &y - &eye.mapv(|z| z * e_cell);

    let op = FnMap {
        dim: chi * chi,
        f: |v: ndarray::ArrayView1<C64>| {
            let x = unflatten(v, chi, chi);
            let mut tx = x.clone();
            for site in [1usize, 0] {
                tx = env_step_left(&tx, a_r[site]);
            }
            let defl = tr_pair(&x, rho_l);
            let out = &x - &tx + &eye.mapv(|z| z * defl);
            flatten(&out)
        },
    };
    let rhs = flatten(&ybar);
    let x0 = warm.map(flatten);
    let (sol, _res) = gmres(
        &op,
        rhs.view(),
        x0.as_ref().map(|v| v.view()),
        tol,
        40,
        200,
    )?;
    let start = unflatten(sol.view(), chi, chi);

    let mut bond1: Vec<Array2<C64>> = blocks
        .iter()
        .map(|b| b.clone().unwrap_or_else(|| Array2::zeros((chi, chi))))
        .collect();
    bond1[MPO_START] = start;

    // Interior bond: right environment of site 0 adds site 1.
    let opt: Vec<Option<Array2<C64>>> = bond1.iter().cloned().map(Some).collect();
    let bond0 = r_step(&opt, a_r[1], mpo)
        .into_iter()
        .map(|b| b.expect("filled"))
        .collect();

    Ok(EnvBlocks {
        bond1,
        bond0,
        e_cell: e_cell.re,
    })
}
