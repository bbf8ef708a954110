//! Pinhole camera without distortion.

use nalgebra::{Matrix2x3, Matrix3};

use crate::{Error, Result, Vec3};

/// Points closer than this (camera-frame z) count as behind the camera.
pub const DEPTH_EPSILON: f64 = 1e-9;

/// Camera with world-to-camera pose `x_cam = R * x_world + t`. The camera
/// looks down +z with +y pointing down the image.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vec3,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let camera = Camera {
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            width,
            height,
        };
        camera.validate()?;
        Ok(camera)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive, got {} and {}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera(
                "image size must be at least 1x1".into(),
            ));
        }
        let r = &self.rotation;
        let orthogonality = (r * r.transpose() - Matrix3::identity()).abs().max();
        if orthogonality > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidCamera(
                "rotation must be orthonormal with determinant +1".into(),
            ));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`; `up` fixes the roll.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let z = (target - eye).normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-12 {
            return Err(Error::InvalidCamera(
                "up vector is parallel to the view direction".into(),
            ));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * eye);
        Camera::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            rotation,
            translation,
            width,
            height,
        )
    }

    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Pixel coordinates and camera-frame depth.
    pub fn project(&self, p: &Vec3) -> Result<([f64; 2], f64)> {
        let q = self.to_camera(p);
        if q.z <= DEPTH_EPSILON {
            return Err(Error::BehindCamera(q.z));
        }
        Ok((self.project_camera_point(&q), q.z))
    }

    #[inline]
    pub fn project_camera_point(&self, q: &Vec3) -> [f64; 2] {
        [self.fx * q.x / q.z + self.cx, self.fy * q.y / q.z + self.cy]
    }

    /// World point seen at pixel `(u, v)` with camera-frame depth `depth`.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let q = Vec3::new(
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        );
        self.rotation.transpose() * (q - self.translation)
    }

    /// Unit world-space direction from the camera center through `(u, v)`.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vec3 {
        let d = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        (self.rotation.transpose() * d).normalize()
    }

    /// Derivative of the pixel position with respect to the world point.
    pub fn projection_jacobian(&self, p: &Vec3) -> Matrix2x3<f64> {
        let q = self.to_camera(p);
        let iz = 1.0 / q.z;
        let dq = Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * q.x * iz * iz,
            0.0,
            self.fy * iz,
            -self.fy * q.y * iz * iz,
        );
        dq * self.rotation
    }

    /// Depth along the camera axis of the intersection between the ray
    /// through `(u, v)` and the plane `n . (x - anchor) = 0`.
    pub fn plane_depth(&self, u: f64, v: f64, normal: &Vec3, anchor: &Vec3) -> Option<f64> {
        let dir_cam = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        let dir = self.rotation.transpose() * dir_cam;
        let denom = normal.dot(&dir);
        if denom.abs() < 1e-15 {
            return None;
        }
        // the camera-frame z of center + s * dir is s, since dir_cam.z = 1
        Some(normal.dot(&(anchor - self.center())) / denom)
    }
}
