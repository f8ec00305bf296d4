//! Plain `Vec`-of-rows EKF used as an independent reference.
//!
//! Rotation and Euler-rate matrices and their partials are written out
//! element by element, and inverses use Gauss-Jordan elimination, so nothing
//! here shares code with the library under test.

#![allow(dead_code, clippy::needless_range_loop)]

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn eye(n: usize) -> Mat {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn mul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for l in 0..k {
                s += a[i][l] * b[l][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

pub fn sub(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect()).collect()
}

pub fn scale(a: &Mat, s: f64) -> Mat {
    a.iter().map(|r| r.iter().map(|v| v * s).collect()).collect()
}

pub fn mat_vec(a: &Mat, v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(v).map(|(p, q)| p * q).sum()).collect()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut aug: Mat = a.iter().zip(eye(n)).map(|(r, e)| r.iter().copied().chain(e).collect()).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs())).unwrap();
        aug.swap(col, piv);
        let d = aug[col][col];
        assert!(d.abs() > 1e-300, "singular matrix");
        for v in aug[col].iter_mut() {
            *v /= d;
        }
        for i in 0..n {
            if i != col {
                let f = aug[i][col];
                if f != 0.0 {
                    for j in 0..2 * n {
                        aug[i][j] -= f * aug[col][j];
                    }
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn wrap(a: f64) -> f64 {
    a.sin().atan2(a.cos())
}

fn rot(r: f64, p: f64, y: f64) -> [[f64; 3]; 3] {
    let (sr, cr, sp, cp, sy, cy) = (r.sin(), r.cos(), p.sin(), p.cos(), y.sin(), y.cos());
    [
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ]
}

fn rot_partials(r: f64, p: f64, y: f64) -> [[[f64; 3]; 3]; 3] {
    let (sr, cr, sp, cp, sy, cy) = (r.sin(), r.cos(), p.sin(), p.cos(), y.sin(), y.cos());
    let d_roll = [
        [0.0, cy * sp * cr + sy * sr, -cy * sp * sr + sy * cr],
        [0.0, sy * sp * cr - cy * sr, -sy * sp * sr - cy * cr],
        [0.0, cp * cr, -cp * sr],
    ];
    let d_pitch = [
        [-cy * sp, cy * cp * sr, cy * cp * cr],
        [-sy * sp, sy * cp * sr, sy * cp * cr],
        [-cp, -sp * sr, -sp * cr],
    ];
    let d_yaw = [
        [-sy * cp, -sy * sp * sr - cy * cr, -sy * sp * cr + cy * sr],
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [0.0, 0.0, 0.0],
    ];
    [d_roll, d_pitch, d_yaw]
}

fn euler(r: f64, p: f64) -> [[f64; 3]; 3] {
    let (sr, cr, cp, tp) = (r.sin(), r.cos(), p.cos(), p.tan());
    [[1.0, sr * tp, cr * tp], [0.0, cr, -sr], [0.0, sr / cp, cr / cp]]
}

fn euler_partials(r: f64, p: f64) -> [[[f64; 3]; 3]; 2] {
    let (sr, cr, sp, cp) = (r.sin(), r.cos(), p.sin(), p.cos());
    let tp = sp / cp;
    let c2 = cp * cp;
    [
        [[0.0, cr * tp, -sr * tp], [0.0, -sr, -cr], [0.0, cr / cp, -sr / cp]],
        [[0.0, sr / c2, cr / c2], [0.0, 0.0, 0.0], [0.0, sr * sp / c2, cr * sp / c2]],
    ]
}

/// Constant-velocity motion model, state `[x y z roll pitch yaw u v w p q r]`.
pub fn f(x: &[f64], dt: f64) -> Vec<f64> {
    let r = rot(x[3], x[4], x[5]);
    let e = euler(x[3], x[4]);
    let mut out = x.to_vec();
    for i in 0..3 {
        for j in 0..3 {
            out[i] += r[i][j] * x[6 + j] * dt;
            out[3 + i] += e[i][j] * x[9 + j] * dt;
        }
    }
    for i in 3..6 {
        out[i] = wrap(out[i]);
    }
    out
}

pub fn jacobian(x: &[f64], dt: f64) -> Mat {
    let mut fm = eye(12);
    let r = rot(x[3], x[4], x[5]);
    let dr = rot_partials(x[3], x[4], x[5]);
    let e = euler(x[3], x[4]);
    let de = euler_partials(x[3], x[4]);
    for i in 0..3 {
        for j in 0..3 {
            fm[i][6 + j] = r[i][j] * dt;
            fm[3 + i][9 + j] = e[i][j] * dt;
        }
        for (k, d) in dr.iter().enumerate() {
            fm[i][3 + k] = (0..3).map(|j| d[i][j] * x[6 + j]).sum::<f64>() * dt;
        }
        for (k, d) in de.iter().enumerate() {
            fm[3 + i][3 + k] += (0..3).map(|j| d[i][j] * x[9 + j]).sum::<f64>() * dt;
        }
    }
    fm
}

pub fn predict(x: &[f64], p: &Mat, q: &Mat, dt: f64) -> (Vec<f64>, Mat) {
    let fm = jacobian(x, dt);
    let p_next = add(&mul(&mul(&fm, p), &transpose(&fm)), &scale(q, dt));
    (f(x, dt), p_next)
}

/// Joseph-form correction for a measurement of the state rows in `idx`.
pub fn correct(x: &[f64], p: &Mat, idx: &[usize], z: &[f64], r: &Mat) -> (Vec<f64>, Mat) {
    let m = idx.len();
    let mut h = zeros(m, 12);
    for (row, &col) in idx.iter().enumerate() {
        h[row][col] = 1.0;
    }
    let hx = mat_vec(&h, x);
    let y: Vec<f64> = (0..m)
        .map(|k| {
            let d = z[k] - hx[k];
            if (3..6).contains(&idx[k]) { wrap(d) } else { d }
        })
        .collect();
    let ht = transpose(&h);
    let s = add(&mul(&mul(&h, p), &ht), r);
    let k = mul(&mul(p, &ht), &inverse(&s));
    let dx = mat_vec(&k, &y);
    let mut x_new: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
    for i in 3..6 {
        x_new[i] = wrap(x_new[i]);
    }
    let i_kh = sub(&eye(12), &mul(&k, &h));
    let p_new = add(&mul(&mul(&i_kh, p), &transpose(&i_kh)), &mul(&mul(&k, r), &transpose(&k)));
    (x_new, p_new)
}

/// Largest absolute difference relative to the largest reference magnitude.
pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let diff = got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mag = want.iter().map(|v| v.abs()).fold(0.0, f64::max);
    diff / mag.max(f64::MIN_POSITIVE)
}

pub fn angle_rel_err(got: &[f64], want: &[f64]) -> f64 {
    let diff = got
        .iter()
        .zip(want)
        .enumerate()
        .map(|(i, (a, b))| if (3..6).contains(&i) { wrap(a - b).abs() } else { (a - b).abs() })
        .fold(0.0, f64::max);
    let mag = want.iter().map(|v| v.abs()).fold(0.0, f64::max);
    diff / mag.max(f64::MIN_POSITIVE)
}

pub fn flatten(m: &Mat) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}
