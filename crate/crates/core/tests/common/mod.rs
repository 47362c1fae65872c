//! Direct-loop re-summation of the weighted energy and stability terms.
//!
//! Written against plain nested vectors with its own weight formulas; shares
//! nothing with the library beyond reading trajectory values.

#![allow(dead_code, clippy::needless_range_loop)]

use stochwave::{Ensemble, Grid, ProblemData, WeightParams};

/// `y[n][j]` for `n = 0..=N+1`, `j = 0..=M+1`.
pub type Table = Vec<Vec<f64>>;

pub fn table(y: &stochwave::GridFunction) -> Table {
    let g = y.grid();
    (0..=g.n() as i64 + 1)
        .map(|n| (0..=g.m() as i64 + 1).map(|j| y.at(j, n)).collect())
        .collect()
}

pub struct Data {
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    /// `g[n][j]` for interior nodes, indexed from 0 for convenience
    pub g: Table,
    pub f: Option<Table>,
}

pub fn data(d: &ProblemData, grid: &Grid) -> Data {
    let (m, n) = (grid.m() as i64, grid.n() as i64);
    let t0 = d.y0.time().lo;
    let t1 = d.y1.time().lo;
    let full = |h: &dyn Fn(i64, i64) -> f64| -> Table {
        (0..=n + 1)
            .map(|t| {
                (0..=m + 1)
                    .map(|j| {
                        if (1..=m).contains(&j) && (1..=n).contains(&t) {
                            h(j, t)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    };
    Data {
        y0: (0..=m + 1).map(|j| d.y0.at(j, t0)).collect(),
        y1: (0..=m + 1).map(|j| d.y1.at(j, t1)).collect(),
        g: full(&|j, t| d.g_at(j, t)),
        f: d.f.as_ref().map(|f| full(&|j, t| f.at(j, t))),
    }
}

struct W {
    s: f64,
    lam: f64,
    beta: f64,
    xs: f64,
    mc: f64,
    tt: f64,
}

impl W {
    fn new(p: &WeightParams) -> W {
        W {
            s: p.s,
            lam: p.lambda,
            beta: p.beta,
            xs: p.xstar,
            mc: p.mconst,
            tt: p.t_final,
        }
    }

    fn vphi(&self, x: f64, t: f64) -> f64 {
        (self.lam * ((x - self.xs).powi(2) - self.beta * (t - self.tt - 1.0).powi(2) + self.mc)).exp()
    }

    fn r2(&self, x: f64, t: f64) -> f64 {
        (2.0 * self.s * self.vphi(x, t)).exp()
    }
}

/// `[L1..L7, R1, R2, R3, H1², V²]` for one path.
pub fn carleman_path(y: &Table, d: &Data, p: &WeightParams, grid: &Grid) -> [f64; 12] {
    let w = W::new(p);
    let (m, n) = (grid.m(), grid.n());
    let (h, k) = (grid.dx(), grid.dt());
    let (s, lam) = (w.s, w.lam);
    let mut out = [0.0; 12];
    for t in 1..=n {
        let tt = t as f64 * k;
        for j in 1..=m {
            let x = j as f64 * h;
            let vp = w.vphi(x, tt);
            let r2 = w.r2(x, tt);
            out[0] += h * k * (s * lam * vp).powi(3) * r2 * y[t][j].powi(2);
            out[1] += h * k * s * lam * vp * r2 * ((y[t + 1][j] - y[t][j]) / k).powi(2);
            out[3] += h * k * s * lam * vp * r2 * d.g[t][j].powi(2);
            if let Some(f) = &d.f {
                out[7] += h * k * r2 * f[t][j].powi(2);
            }
        }
        for q in 0..=m {
            let x = (q as f64 + 0.5) * h;
            out[2] += h * k * s * lam * w.vphi(x, tt) * w.r2(x, tt) * ((y[t][q + 1] - y[t][q]) / h).powi(2);
        }
        out[8] += k * s * lam * w.vphi(0.0, tt) * ((y[t][1] - y[t][0]) / h).powi(2);
    }
    for j in 1..=m {
        let x = j as f64 * h;
        let vp = w.vphi(x, 0.0);
        out[4] += h * (s * lam * vp).powi(3) * w.r2(x, 0.0) * d.y0[j].powi(2);
        out[6] += h * s * lam * vp * w.r2(x, 0.0) * d.y1[j].powi(2);
    }
    for q in 0..=m {
        let x = (q as f64 + 0.5) * h;
        out[5] += h * s * lam * w.vphi(x, 0.0) * w.r2(x, 0.0) * ((d.y0[q + 1] - d.y0[q]) / h).powi(2);
    }
    for q in 0..=m {
        let x = (q as f64 + 0.5) * h;
        for t in 0..n {
            let tt = (t as f64 + 0.5) * k;
            let mixed = ((y[t + 1][q + 1] - y[t + 1][q]) - (y[t][q + 1] - y[t][q])) / (h * k);
            out[9] += h * h * h * k * s * lam * lam * w.vphi(x, tt) * mixed.powi(2);
        }
    }
    let (h1, v) = terminal(y, grid);
    out[10] = h1;
    out[11] = v;
    out
}

/// Squared `H1` norm of `y^N` and squared `L2` norm of `(y^{N+1} - y^N)/dt`.
pub fn terminal(y: &Table, grid: &Grid) -> (f64, f64) {
    let (m, n) = (grid.m(), grid.n());
    let (h, k) = (grid.dx(), grid.dt());
    let mut h1 = 0.0;
    for q in 0..=m {
        h1 += h * ((y[n][q + 1] - y[n][q]) / h).powi(2);
    }
    let mut v = 0.0;
    for j in 1..=m {
        h1 += h * y[n][j].powi(2);
        v += h * ((y[n + 1][j] - y[n][j]) / k).powi(2);
    }
    (h1, v)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `[L1..L7, R1..R4]` averaged over the ensemble.
pub fn carleman(ens: &Ensemble, d: &ProblemData, p: &WeightParams, grid: &Grid, kappa: f64) -> [f64; 11] {
    let dd = data(d, grid);
    let rows: Vec<[f64; 12]> = ens
        .trajectories
        .iter()
        .map(|t| carleman_path(&table(&t.y), &dd, p, grid))
        .collect();
    let col = |i: usize| mean(&rows.iter().map(|r| r[i]).collect::<Vec<_>>());
    let mut out = [0.0; 11];
    for i in 0..10 {
        out[i] = col(i);
    }
    out[10] = p.s.powi(3) * (kappa * p.s).exp() * (col(10).sqrt() + col(11).sqrt()).powi(2);
    out
}

/// `[G, Y0, Y1, FLUX, XT, DTDX]` for a coupled pair.
pub fn stability(
    a: &Ensemble,
    b: &Ensemble,
    da: &ProblemData,
    db: &ProblemData,
    grid: &Grid,
    space_only_g: bool,
) -> [f64; 6] {
    let (m, n) = (grid.m(), grid.n());
    let (h, k) = (grid.dx(), grid.dt());
    let pa = data(da, grid);
    let pb = data(db, grid);
    let mut g2 = 0.0;
    if space_only_g {
        for j in 1..=m {
            g2 += h * (pa.g[1][j] - pb.g[1][j]).powi(2);
        }
    } else {
        for t in 1..=n {
            for j in 1..=m {
                g2 += h * k * (pa.g[t][j] - pb.g[t][j]).powi(2);
            }
        }
    }
    let dy0: Vec<f64> = (0..=m + 1).map(|j| pa.y0[j] - pb.y0[j]).collect();
    let mut y0 = 0.0;
    for q in 0..=m {
        y0 += h * ((dy0[q + 1] - dy0[q]) / h).powi(2);
    }
    let mut y1 = 0.0;
    for j in 1..=m {
        y0 += h * dy0[j].powi(2);
        y1 += h * (pa.y1[j] - pb.y1[j]).powi(2);
    }
    let mut flux = Vec::new();
    let mut h1 = Vec::new();
    let mut vel = Vec::new();
    let mut mixed = Vec::new();
    for (ta, tb) in a.trajectories.iter().zip(&b.trajectories) {
        let ya = table(&ta.y);
        let yb = table(&tb.y);
        let d: Table = ya
            .iter()
            .zip(&yb)
            .map(|(r, q)| r.iter().zip(q).map(|(u, v)| u - v).collect())
            .collect();
        let mut fl = 0.0;
        for t in 1..=n {
            fl += k * ((d[t][1] - d[t][0]) / h).powi(2);
        }
        flux.push(fl);
        let (a1, a2) = terminal(&d, grid);
        h1.push(a1);
        vel.push(a2);
        let mut mx = 0.0;
        for q in 0..=m {
            for t in 0..n {
                let v = ((d[t + 1][q + 1] - d[t + 1][q]) - (d[t][q + 1] - d[t][q])) / (h * k);
                mx += h * k * (h * v).powi(2);
            }
        }
        mixed.push(mx);
    }
    [
        g2.sqrt(),
        y0.sqrt(),
        y1.sqrt(),
        mean(&flux).sqrt(),
        mean(&h1).sqrt() + mean(&vel).sqrt(),
        mean(&mixed).sqrt(),
    ]
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}
