use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn mat_vec(m: &Mat3, v: Point3) -> Point3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// `m^T v`.
pub fn mat_t_vec(m: &Mat3, v: Point3) -> Point3 {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn norm(a: Point3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Rotation by the axis-angle vector `w` (Rodrigues).
pub fn rotation_from_axis_angle(w: Point3) -> Mat3 {
    let theta = norm(w);
    if theta == 0.0 {
        return IDENTITY;
    }
    let k = [w[0] / theta, w[1] / theta, w[2] / theta];
    let (s, c) = theta.sin_cos();
    let v = 1.0 - c;
    [
        [c + k[0] * k[0] * v, k[0] * k[1] * v - k[2] * s, k[0] * k[2] * v + k[1] * s],
        [k[1] * k[0] * v + k[2] * s, c + k[1] * k[1] * v, k[1] * k[2] * v - k[0] * s],
        [k[2] * k[0] * v - k[1] * s, k[2] * k[1] * v + k[0] * s, c + k[2] * k[2] * v],
    ]
}

/// Pinhole camera of a rectified stereo rig. The pose maps world to camera
/// coordinates: `X_cam = R X_world + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraParams {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub baseline: f64,
    pub rotation: Mat3,
    pub translation: Point3,
}

impl CameraParams {
    pub fn new(focal: f64, cx: f64, cy: f64, baseline: f64, rotation: Mat3, translation: Point3) -> Result<Self> {
        let cam = CameraParams {
            focal,
            cx,
            cy,
            baseline,
            rotation,
            translation,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0) || !(self.baseline > 0.0) {
            return Err(Error::invalid(format!(
                "camera needs focal > 0 and baseline > 0, got {} and {}",
                self.focal, self.baseline
            )));
        }
        let all = [self.cx, self.cy]
            .into_iter()
            .chain(self.rotation.iter().flatten().copied())
            .chain(self.translation);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("camera parameters".into()));
        }
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-6 {
                    return Err(Error::invalid(format!("camera rotation is not orthonormal (R^T R)[{i}][{j}] = {dot}")));
                }
            }
        }
        Ok(())
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Point3 {
        let t = self.translation;
        mat_t_vec(&self.rotation, [-t[0], -t[1], -t[2]])
    }

    pub fn world_to_camera(&self, p: Point3) -> Point3 {
        add(mat_vec(&self.rotation, p), self.translation)
    }

    pub fn camera_to_world(&self, p: Point3) -> Point3 {
        mat_t_vec(&self.rotation, sub(p, self.translation))
    }

    /// World-frame direction of the ray through pixel `(x, y)`, scaled so
    /// its camera-frame depth component is 1.
    pub fn ray(&self, x: f64, y: f64) -> Point3 {
        mat_t_vec(&self.rotation, [(x - self.cx) / self.focal, (y - self.cy) / self.focal, 1.0])
    }

    pub fn disparity_of_depth(&self, z: f64) -> f64 {
        self.focal * self.baseline / z
    }

    /// Camera-frame depth `Z = focal * baseline / disparity`, back-projected
    /// through the pixel and moved to the world frame.
    pub fn unproject(&self, x: f64, y: f64, disparity: f64) -> Result<Point3> {
        if !(disparity > 0.0) {
            return Err(Error::invalid(format!("unproject needs positive disparity, got {disparity}")));
        }
        let z = self.focal * self.baseline / disparity;
        let pc = [(x - self.cx) * z / self.focal, (y - self.cy) * z / self.focal, z];
        Ok(self.camera_to_world(pc))
    }

    /// Pixel position and disparity of a world point; `None` behind the camera.
    pub fn project(&self, p: Point3) -> Option<(f64, f64, f64)> {
        let pc = self.world_to_camera(p);
        if !(pc[2] > 0.0) {
            return None;
        }
        Some((
            self.focal * pc[0] / pc[2] + self.cx,
            self.focal * pc[1] / pc[2] + self.cy,
            self.disparity_of_depth(pc[2]),
        ))
    }

    /// Uniformly rescaled world: baseline and translation times `s`.
    pub fn scaled(&self, s: f64) -> CameraParams {
        CameraParams {
            baseline: self.baseline * s,
            translation: self.translation.map(|v| v * s),
            ..*self
        }
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// One line: `focal=.. cx=.. cy=.. baseline=.. rotation=r00,..,r22 translation=tx,ty,tz`.
/// Values print in shortest round-trip form, so parsing then printing
/// reproduces the line.
impl fmt::Display for CameraParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r: Vec<f64> = self.rotation.iter().flatten().copied().collect();
        write!(
            f,
            "focal={} cx={} cy={} baseline={} rotation={} translation={}",
            self.focal,
            self.cx,
            self.cy,
            self.baseline,
            join(&r),
            join(&self.translation)
        )
    }
}

impl FromStr for CameraParams {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let bad = |m: String| Error::format("camera", m);
        let (mut focal, mut cx, mut cy, mut baseline) = (None, None, None, None);
        let (mut rotation, mut translation) = (None, None);
        let num = |k: &str, v: &str| v.parse::<f64>().map_err(|_| bad(format!("bad number for {k}: {v:?}")));
        let list = |k: &str, v: &str, n: usize| -> Result<Vec<f64>> {
            let vals = v.split(',').map(|x| num(k, x)).collect::<Result<Vec<_>>>()?;
            if vals.len() != n {
                return Err(bad(format!("{k} needs {n} values, got {}", vals.len())));
            }
            Ok(vals)
        };
        for tok in line.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| bad(format!("expected key=value, got {tok:?}")))?;
            match k {
                "focal" => focal = Some(num(k, v)?),
                "cx" => cx = Some(num(k, v)?),
                "cy" => cy = Some(num(k, v)?),
                "baseline" => baseline = Some(num(k, v)?),
                "rotation" => {
                    let r = list(k, v, 9)?;
                    rotation = Some([[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]]);
                }
                "translation" => {
                    let t = list(k, v, 3)?;
                    translation = Some([t[0], t[1], t[2]]);
                }
                _ => return Err(bad(format!("unknown key {k:?}"))),
            }
        }
        let need = |o: Option<f64>, k: &str| o.ok_or_else(|| bad(format!("missing {k}")));
        CameraParams::new(
            need(focal, "focal")?,
            need(cx, "cx")?,
            need(cy, "cy")?,
            need(baseline, "baseline")?,
            rotation.ok_or_else(|| bad("missing rotation".into()))?,
            translation.ok_or_else(|| bad("missing translation".into()))?,
        )
    }
}
