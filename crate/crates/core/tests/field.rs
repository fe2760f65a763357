use hazefield::field::{
    render_ray, render_ray_backward, render_rays_backward, render_subgrid, Camera, GradBuffer, Ray, SubgridSpec,
    VoxelGrid,
};
use hazefield::scalar::softplus;

/// Column grid over `[0,1]² × [0, 2]` with `nz` vertices along z, density
/// and color set per vertex height.
fn column(nz: usize, density: impl Fn(f64) -> f64, color: impl Fn(f64) -> [f64; 3]) -> VoxelGrid<f64> {
    let mut g = VoxelGrid::new([2, 2, nz], [0.0, 0.0, 0.0], [1.0, 1.0, 2.0], [0.0, 0.0, 1.0]).unwrap();
    for z in 0..nz {
        let h = 2.0 * z as f64 / (nz - 1) as f64;
        for y in 0..2 {
            for x in 0..2 {
                let i = g.index(x, y, z);
                g.density_raw[i] = density(h);
                g.color_raw[i] = color(h);
            }
        }
    }
    g
}

fn up_ray(near: f64, far: f64) -> Ray<f64> {
    Ray::new([0.5, 0.5, -1.0], [0.0, 0.0, 1.0], near, far).unwrap()
}

#[test]
fn opaque_front_slab_hides_the_back_slab() {
    let n = 128;
    let ray = up_ray(0.0, 4.0);
    let delta = 4.0 / n as f64;
    let raw = 20.0 / delta + 1.0;
    assert!(softplus(raw) * delta >= 20.0);
    let grid = column(
        41,
        |h| if (0.5..=1.0).contains(&h) || (1.3..=1.8).contains(&h) { raw } else { -30.0 },
        |h| if h < 1.15 { [10.0, -10.0, -10.0] } else { [-10.0, 10.0, -10.0] },
    );
    let (out, _) = render_ray(&grid, &ray, n, None).unwrap();
    let front = [1.0, 0.0, 0.0];
    for c in 0..3 {
        assert!((out.color[c] - front[c]).abs() < 1e-3, "{:?}", out.color);
    }
}

#[test]
fn opaque_plane_depth_within_one_sample() {
    let n = 128;
    let (near, far) = (0.0, 3.0);
    let delta = (far - near) / n as f64;
    for plane in [0.4, 0.83, 1.37] {
        // Ray starts at z = -1, so the plane sits at distance 1 + plane.
        let d_star = 1.0 + plane;
        let grid = column(201, |h| if h >= plane - 1e-9 { 500.0 } else { -30.0 }, |_| [0.0; 3]);
        let (out, _) = render_ray(&grid, &up_ray(near, far), n, None).unwrap();
        assert!(out.opacity > 0.99);
        assert!((out.depth - d_star).abs() <= delta, "depth {} vs {d_star}", out.depth);
    }
}

fn noisy_grid(res: usize) -> VoxelGrid<f64> {
    let mut g = VoxelGrid::new([res; 3], [-1.0; 3], [1.0; 3], [0.3, 0.3, 0.3]).unwrap();
    for (i, d) in g.density_raw.iter_mut().enumerate() {
        *d = ((i * 7919 % 113) as f64 / 113.0) * 4.0 - 2.0;
    }
    for (i, c) in g.color_raw.iter_mut().enumerate() {
        *c = [0.1 * (i % 7) as f64 - 0.3, 0.2, -0.05 * (i % 11) as f64];
    }
    g
}

fn camera() -> Camera {
    Camera::look_at([2.5, 1.5, 1.0], [0.0; 3], [0.0, 0.0, 1.0], 12, 10, 11.0, 0.5, 5.0).unwrap()
}

#[test]
fn subgrid_render_is_deterministic_and_jitter_changes_samples() {
    let g = noisy_grid(5);
    let cam = camera();
    let lat = SubgridSpec::lattice(12, 10, 3, 1, 2).unwrap();
    let (a, _) = render_subgrid(&g, &cam, &lat, 32, Some(9)).unwrap();
    let (b, _) = render_subgrid(&g, &cam, &lat, 32, Some(9)).unwrap();
    let (c, _) = render_subgrid(&g, &cam, &lat, 32, Some(10)).unwrap();
    let (m, _) = render_subgrid(&g, &cam, &lat, 32, None).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_ne!(a, m);
    assert_eq!(a.color.width(), lat.cols);
    assert_eq!(a.color.height(), lat.rows);
}

#[test]
fn subgrid_matches_full_render_at_lattice_pixels() {
    let g = noisy_grid(4);
    let cam = camera();
    let (full, _) = render_subgrid(&g, &cam, &SubgridSpec::full(12, 10), 24, None).unwrap();
    let lat = SubgridSpec::lattice(12, 10, 4, 3, 1).unwrap();
    let (sub, _) = render_subgrid(&g, &cam, &lat, 24, None).unwrap();
    assert_eq!(lat.gather(&full.color).unwrap(), sub.color);
    assert_eq!(lat.gather(&full.depth).unwrap(), sub.depth);
}

#[test]
fn batched_backward_equals_ray_by_ray() {
    let g = noisy_grid(5);
    let cam = camera();
    let lat = SubgridSpec::full(12, 10);
    let (_, tapes) = render_subgrid(&g, &cam, &lat, 20, Some(3)).unwrap();
    let cot: Vec<_> = (0..tapes.len())
        .map(|k| ([0.3, -0.1 * (k % 5) as f64, 0.2], 0.01 * k as f64, -0.5))
        .collect();
    let mut batched = GradBuffer::for_grid(&g, 0);
    render_rays_backward(&g, &tapes, &cot, &mut batched).unwrap();
    let mut serial = GradBuffer::for_grid(&g, 0);
    for (t, &(c, d, o)) in tapes.iter().zip(&cot) {
        render_ray_backward(&g, t, c, d, o, &mut serial).unwrap();
    }
    assert_eq!(batched, serial);
}

#[test]
fn pixel_rays_pass_through_pixel_centers() {
    let cam = camera();
    let r = cam.pixel_ray::<f64>(6, 5);
    // The principal point sits at the image center, so pixel (6, 5) has its
    // center half a pixel right of and below the optical axis.
    let f = cam.forward();
    let along = r.direction[0] * f[0] + r.direction[1] * f[1] + r.direction[2] * f[2];
    let off = (1.0 - along * along).sqrt();
    let expect = (0.5f64.hypot(0.5) / cam.focal).atan().sin();
    assert!((off - expect).abs() < 1e-12, "{off} vs {expect}");
}
