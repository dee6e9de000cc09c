use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::camera::{add, rotation_from_axis_angle, CameraParams, Point3, IDENTITY};
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::{BinaryMask, RgbImage, ScalarMap};

/// Colour palettes. `Standard` pairs cool, washed-out backgrounds with warm,
/// saturated objects; `Shifted` swaps the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TextureFamily {
    #[default]
    Standard,
    Shifted,
}

/// A textured band on the lower part of the background that moves like an
/// object but is not one (water, smoke).
#[derive(Debug, Clone, PartialEq)]
pub struct StuffConfig {
    /// Image row, as a fraction of the height, where the band starts.
    pub top_fraction: f64,
    /// Horizontal speed, world units per frame.
    pub speed: f64,
    /// Distance in front of the background plane.
    pub depth_offset: f64,
}

impl Default for StuffConfig {
    fn default() -> Self {
        StuffConfig {
            top_fraction: 0.7,
            speed: 0.1,
            depth_offset: 0.4,
        }
    }
}

/// Scene sampling ranges. Ranges are inclusive `(lo, hi)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    /// Focal length in pixels.
    pub focal: f64,
    pub baseline: f64,
    pub num_objects: (usize, usize),
    /// Lower bound on independently moving objects (capped by the count).
    pub min_moving: usize,
    pub moving_prob: f64,
    pub object_depth: (f64, f64),
    pub min_depth_gap: f64,
    /// Object half-size in pixels at its depth.
    pub object_radius_px: (f64, f64),
    /// Object speed in world units per frame.
    pub speed: (f64, f64),
    pub background_depth: (f64, f64),
    /// Per-axis bound on the camera centre displacement.
    pub camera_translation: f64,
    /// Per-axis bound on the camera rotation (radians).
    pub camera_rotation: f64,
    pub texture: TextureFamily,
    /// Texture wavelength in pixels at the surface depth.
    pub texture_period_px: (f64, f64),
    pub stuff: Option<StuffConfig>,
}

impl SceneConfig {
    /// 64x64 frames with one to four large sprites.
    pub fn desk() -> Self {
        SceneConfig {
            height: 64,
            width: 64,
            focal: 70.0,
            baseline: 0.1,
            num_objects: (1, 4),
            min_moving: 1,
            moving_prob: 0.5,
            object_depth: (1.5, 3.5),
            min_depth_gap: 0.2,
            object_radius_px: (9.0, 18.0),
            speed: (0.06, 0.15),
            background_depth: (4.0, 5.0),
            camera_translation: 0.05,
            camera_rotation: 0.004,
            texture: TextureFamily::Standard,
            texture_period_px: (8.0, 20.0),
            stuff: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.height == 0 || self.width == 0 {
            return bad(format!("image size must be positive, got {}x{}", self.height, self.width));
        }
        if !(self.focal > 0.0) || !(self.baseline > 0.0) {
            return bad("focal and baseline must be positive".into());
        }
        let ranges = [
            ("object_depth", self.object_depth),
            ("object_radius_px", self.object_radius_px),
            ("speed", self.speed),
            ("background_depth", self.background_depth),
            ("texture_period_px", self.texture_period_px),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad(format!("{name} must be a nonempty positive range, got ({lo}, {hi})"));
            }
        }
        if self.num_objects.0 > self.num_objects.1 {
            return bad(format!("num_objects range {:?} is empty", self.num_objects));
        }
        if !(0.0..=1.0).contains(&self.moving_prob) {
            return bad(format!("moving_prob {} outside [0, 1]", self.moving_prob));
        }
        if self.min_depth_gap < 0.0 || self.camera_translation < 0.0 || self.camera_rotation < 0.0 {
            return bad("depth gap and camera motion bounds must be nonnegative".into());
        }
        let slots = ((self.object_depth.1 - self.object_depth.0) / self.min_depth_gap.max(1e-12)).floor() as usize + 1;
        if self.num_objects.1 > slots {
            return bad(format!(
                "cannot place {} objects {} apart in depth range {:?}",
                self.num_objects.1, self.min_depth_gap, self.object_depth
            ));
        }
        if self.background_depth.0 <= self.object_depth.1 + self.min_depth_gap {
            return bad("background must lie behind every object".into());
        }
        if let Some(s) = &self.stuff {
            if !(0.0..1.0).contains(&s.top_fraction) || !(s.depth_offset > 0.0) || s.depth_offset >= self.background_depth.0 {
                return bad(format!("invalid stuff band {s:?}"));
            }
        }
        Ok(())
    }

    pub fn principal_point(&self) -> (f64, f64) {
        ((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0)
    }
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// One generated frame pair with exact geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub rgb_t: RgbImage,
    pub rgb_t1: RgbImage,
    pub flow_gt: FlowField,
    pub disparity_t: ScalarMap,
    pub disparity_t1: ScalarMap,
    pub cam_t: CameraParams,
    pub cam_t1: CameraParams,
    /// Visible pixels of each sprite in frame t.
    pub instance_masks: Vec<BinaryMask>,
    /// Independent-motion flag of each sprite.
    pub object_moving: Vec<bool>,
    /// Visible pixels of the moving stuff band, if any.
    pub stuff_mask: BinaryMask,
    /// Pixels of moving sprites that stay visible in frame t+1.
    pub moving_mask: BinaryMask,
    /// Pixels of frame t hidden or out of view in frame t+1.
    pub occlusion_mask: BinaryMask,
    pub seed: u64,
}

impl SceneSample {
    pub fn dims(&self) -> (usize, usize) {
        self.moving_mask.dims()
    }

    /// Motion flag the generator assigned to the surface under each pixel.
    pub fn object_flag_mask(&self) -> BinaryMask {
        let (h, w) = self.dims();
        BinaryMask::from_fn(h, w, |y, x| {
            self.instance_masks
                .iter()
                .zip(&self.object_moving)
                .any(|(m, &mv)| mv && m.get(y, x))
        })
        .expect("nonzero size")
    }

    pub fn union_of_instances(&self) -> BinaryMask {
        let (h, w) = self.dims();
        BinaryMask::from_fn(h, w, |y, x| self.instance_masks.iter().any(|m| m.get(y, x))).expect("nonzero size")
    }
}

#[derive(Debug, Clone)]
struct Texture {
    base: [f64; 3],
    waves: Vec<([f64; 2], f64, [f64; 3])>,
}

impl Texture {
    fn color(&self, u: f64, v: f64) -> [f64; 3] {
        let mut c = self.base;
        for (k, phase, amp) in &self.waves {
            let s = (k[0] * u + k[1] * v + phase).sin();
            for i in 0..3 {
                c[i] += amp[i] * s;
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy)]
enum Outline {
    Everywhere,
    /// Local `y >= top`.
    Below(f64),
    /// `|x/a|^p + |y/b|^p <= 1`.
    Superellipse { a: f64, b: f64, p: f64 },
}

impl Outline {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Outline::Everywhere => true,
            Outline::Below(top) => y >= top,
            Outline::Superellipse { a, b, p } => (x / a).abs().powf(p) + (y / b).abs().powf(p) <= 1.0,
        }
    }
}

/// A fronto-parallel planar patch translating with constant velocity.
#[derive(Debug, Clone)]
struct Surface {
    origin: Point3,
    velocity: Point3,
    outline: Outline,
    texture: Texture,
}

impl Surface {
    fn origin_at(&self, tau: f64) -> Point3 {
        add(self.origin, self.velocity.map(|v| v * tau))
    }
}

/// Surface index and camera depth of the first hit.
pub(crate) struct Hit {
    pub surface: usize,
    pub point: Point3,
    pub depth: f64,
}

/// The rendered world: surface 0 is the background, 1 the stuff band
/// (possibly absent), `2 + k` sprite `k`.
pub(crate) struct World {
    surfaces: Vec<Option<Surface>>,
}

impl World {
    pub fn cast(&self, cam: &CameraParams, tau: f64, x: f64, y: f64) -> Hit {
        let o = cam.center();
        let d = cam.ray(x, y);
        let mut best: Option<Hit> = None;
        for (i, s) in self.surfaces.iter().enumerate() {
            let Some(s) = s else { continue };
            let org = s.origin_at(tau);
            if d[2] == 0.0 {
                continue;
            }
            let t = (org[2] - o[2]) / d[2];
            if !(t > 0.0) || best.as_ref().is_some_and(|b| b.depth <= t) {
                continue;
            }
            let p = [o[0] + t * d[0], o[1] + t * d[1], org[2]];
            if s.outline.contains(p[0] - org[0], p[1] - org[1]) {
                best = Some(Hit {
                    surface: i,
                    point: p,
                    depth: t,
                });
            }
        }
        best.expect("the background plane covers every ray")
    }

    fn color(&self, hit: &Hit, tau: f64) -> [u8; 3] {
        let s = self.surfaces[hit.surface].as_ref().expect("hit surface exists");
        let org = s.origin_at(tau);
        s.texture
            .color(hit.point[0] - org[0], hit.point[1] - org[1])
            .map(|c| c.round().clamp(0.0, 255.0) as u8)
    }

    fn velocity(&self, surface: usize) -> Point3 {
        self.surfaces[surface].as_ref().map(|s| s.velocity).unwrap_or([0.0; 3])
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [(r + m) * 255.0, (g + m) * 255.0, (b + m) * 255.0]
}

/// `(hue range, saturation range, value range)`.
type Palette = ((f64, f64), (f64, f64), (f64, f64));
const COOL_MUTED: Palette = ((170.0, 260.0), (0.08, 0.35), (0.35, 0.75));
const WARM_VIVID: Palette = ((-25.0, 55.0), (0.55, 0.9), (0.6, 0.95));

fn sample_texture(rng: &mut ChaCha8Rng, palette: Palette, period_px: (f64, f64), world_per_px: f64) -> Texture {
    let (hr, sr, vr) = palette;
    let base = hsv_to_rgb(
        rng.random_range(hr.0..=hr.1),
        rng.random_range(sr.0..=sr.1),
        rng.random_range(vr.0..=vr.1),
    );
    let waves = (0..3)
        .map(|_| {
            let period = rng.random_range(period_px.0..=period_px.1) * world_per_px;
            let dir = rng.random_range(0.0..PI);
            let k = 2.0 * PI / period;
            let amp = rng.random_range(10.0..=28.0);
            let tint = [0; 3].map(|_| amp * rng.random_range(0.6..=1.0));
            ([k * dir.cos(), k * dir.sin()], rng.random_range(0.0..2.0 * PI), tint)
        })
        .collect();
    Texture { base, waves }
}

fn range(rng: &mut ChaCha8Rng, r: (f64, f64)) -> f64 {
    if r.0 == r.1 {
        r.0
    } else {
        rng.random_range(r.0..=r.1)
    }
}

struct Layout {
    world: World,
    cam_t: CameraParams,
    cam_t1: CameraParams,
    object_moving: Vec<bool>,
}

fn sample_layout(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<Layout> {
    let (cx, cy) = cfg.principal_point();
    let cam_t = CameraParams::new(cfg.focal, cx, cy, cfg.baseline, IDENTITY, [0.0; 3])?;
    let (bg_palette, obj_palette) = match cfg.texture {
        TextureFamily::Standard => (COOL_MUTED, WARM_VIVID),
        TextureFamily::Shifted => (WARM_VIVID, COOL_MUTED),
    };

    let z_bg = range(rng, cfg.background_depth);
    let mut surfaces = vec![Some(Surface {
        origin: [0.0, 0.0, z_bg],
        velocity: [0.0; 3],
        outline: Outline::Everywhere,
        texture: sample_texture(rng, bg_palette, cfg.texture_period_px, z_bg / cfg.focal),
    })];
    surfaces.push(cfg.stuff.as_ref().map(|st| {
        let z = z_bg - st.depth_offset;
        let top_px = st.top_fraction * cfg.height as f64;
        let mut tex = sample_texture(rng, bg_palette, cfg.texture_period_px, z / cfg.focal);
        // bluish-green tint so the band reads as a distinct region
        tex.base = [tex.base[0] * 0.6, tex.base[1], tex.base[2] * 0.9];
        Surface {
            origin: [0.0, 0.0, z],
            velocity: [st.speed, 0.0, 0.0],
            outline: Outline::Below((top_px - cy) * z / cfg.focal),
            texture: tex,
        }
    }));

    let n = if cfg.num_objects.0 == cfg.num_objects.1 {
        cfg.num_objects.0
    } else {
        rng.random_range(cfg.num_objects.0..=cfg.num_objects.1)
    };
    let mut depths: Vec<f64> = Vec::with_capacity(n);
    let mut attempts = 0;
    while depths.len() < n {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::invalid("could not place objects at distinct depths"));
        }
        let z = range(rng, cfg.object_depth);
        if depths.iter().all(|d| (d - z).abs() >= cfg.min_depth_gap) {
            depths.push(z);
        }
    }
    let mut moving: Vec<bool> = (0..n).map(|_| rng.random_bool(cfg.moving_prob)).collect();
    let want = cfg.min_moving.min(n);
    while moving.iter().filter(|&&m| m).count() < want {
        let i = rng.random_range(0..n);
        moving[i] = true;
    }
    for (k, &z) in depths.iter().enumerate() {
        let r_px = range(rng, cfg.object_radius_px);
        let aspect = rng.random_range(0.65..=1.5);
        let a = r_px * z / cfg.focal;
        let b = a * aspect;
        let p = rng.random_range(2.0..=5.0);
        let px = rng.random_range(0.1..=0.9) * (cfg.width as f64 - 1.0);
        let py = rng.random_range(0.1..=0.9) * (cfg.height as f64 - 1.0);
        let origin = [(px - cx) * z / cfg.focal, (py - cy) * z / cfg.focal, z];
        let velocity = if moving[k] {
            let speed = range(rng, cfg.speed);
            let theta = rng.random_range(0.0..2.0 * PI);
            let vz: f64 = rng.random_range(-0.3..=0.3);
            let norm = (1.0 + vz * vz).sqrt();
            [speed * theta.cos() / norm, speed * theta.sin() / norm, speed * vz / norm]
        } else {
            [0.0; 3]
        };
        surfaces.push(Some(Surface {
            origin,
            velocity,
            outline: Outline::Superellipse { a, b, p },
            texture: sample_texture(rng, obj_palette, cfg.texture_period_px, z / cfg.focal),
        }));
    }

    let t = cfg.camera_translation;
    let center = [rng.random_range(-t..=t), rng.random_range(-t..=t), 0.5 * rng.random_range(-t..=t)];
    let r = cfg.camera_rotation;
    let rot = rotation_from_axis_angle([0; 3].map(|_| rng.random_range(-r..=r)));
    let mut tr = super::camera::mat_vec(&rot, center);
    tr = tr.map(|v| -v);
    let cam_t1 = CameraParams::new(cfg.focal, cx, cy, cfg.baseline, rot, tr)?;
    Ok(Layout {
        world: World { surfaces },
        cam_t,
        cam_t1,
        object_moving: moving,
    })
}

/// Renders both frames and the exact flow, disparity and occlusion maps of
/// a random scene. Deterministic in `(cfg, seed)`.
pub fn generate_scene(cfg: &SceneConfig, seed: u64) -> Result<SceneSample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = sample_layout(cfg, &mut rng)?;
    render(cfg, &layout, seed)
}

fn render(cfg: &SceneConfig, layout: &Layout, seed: u64) -> Result<SceneSample> {
    let (h, w) = (cfg.height, cfg.width);
    let world = &layout.world;
    let (cam_t, cam_t1) = (&layout.cam_t, &layout.cam_t1);
    let n_obj = layout.object_moving.len();
    let mut rgb_t = RgbImage::new(h, w)?;
    let mut rgb_t1 = RgbImage::new(h, w)?;
    let mut disp_t = Vec::with_capacity(h * w);
    let mut disp_t1 = Vec::with_capacity(h * w);
    let mut u = Vec::with_capacity(h * w);
    let mut v = Vec::with_capacity(h * w);
    let mut ids = Vec::with_capacity(h * w);
    let mut occluded = Vec::with_capacity(h * w);
    let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64, y as f64);
            let hit = world.cast(cam_t, 0.0, fx, fy);
            rgb_t.put(y, x, world.color(&hit, 0.0));
            disp_t.push(cam_t.disparity_of_depth(hit.depth) as f32);
            let moved = add(hit.point, world.velocity(hit.surface));
            let (jx, jy, _) = cam_t1
                .project(moved)
                .ok_or_else(|| Error::invalid("scene point behind the second camera"))?;
            u.push((jx - fx) as f32);
            v.push((jy - fy) as f32);
            let inside = (0.0..=xmax).contains(&jx) && (0.0..=ymax).contains(&jy);
            occluded.push(u8::from(!inside || world.cast(cam_t1, 1.0, jx, jy).surface != hit.surface));
            ids.push(hit.surface);

            let hit1 = world.cast(cam_t1, 1.0, fx, fy);
            rgb_t1.put(y, x, world.color(&hit1, 1.0));
            disp_t1.push(cam_t1.disparity_of_depth(hit1.depth) as f32);
        }
    }
    let occlusion_mask = BinaryMask::from_vec(h, w, occluded)?;
    let mask_of = |id: usize| BinaryMask::from_vec(h, w, ids.iter().map(|&s| u8::from(s == id)).collect());
    let instance_masks = (0..n_obj).map(|k| mask_of(2 + k)).collect::<Result<Vec<_>>>()?;
    let stuff_mask = mask_of(1)?;
    let moving_mask = BinaryMask::from_fn(h, w, |y, x| {
        let s = ids[y * w + x];
        s >= 2 && layout.object_moving[s - 2] && !occlusion_mask.get(y, x)
    })?;
    Ok(SceneSample {
        rgb_t,
        rgb_t1,
        flow_gt: FlowField::new(h, w, u, v)?,
        disparity_t: ScalarMap::from_vec(h, w, disp_t)?,
        disparity_t1: ScalarMap::from_vec(h, w, disp_t1)?,
        cam_t: *cam_t,
        cam_t1: *cam_t1,
        instance_masks,
        object_moving: layout.object_moving.clone(),
        stuff_mask,
        moving_mask,
        occlusion_mask,
        seed,
    })
}
