//! Channel-mask fusion of a global and a local feature map.

use reid_rank::fusion::{fuse, make_masks, FeatureMap, FusionMode};

fn main() -> reid_rank::Result<()> {
    let (h, w, c) = (2, 2, 6);
    let global = FeatureMap::from_fn(h, w, c, |y, x, k| {
        100.0 + (y * 10 + x) as f64 + k as f64 * 0.1
    })?;
    let local = FeatureMap::from_fn(h, w, c, |y, x, k| -((y * 10 + x) as f64 + k as f64 * 0.1))?;

    let (m_g, m_l) = make_masks(c);
    println!("M_G = {:?}", m_g.as_f64());
    println!("M_L = {:?}", m_l.as_f64());

    let glamor = fuse(&global, &local, FusionMode::Glamor)?;
    let counter = fuse(&global, &local, FusionMode::Counter)?;
    let pixel = |f: &FeatureMap| (0..c).map(|k| f.get(0, 1, k)).collect::<Vec<_>>();
    println!("pixel (0,1) glamor:  {:?}", pixel(&glamor));
    println!("pixel (0,1) counter: {:?}", pixel(&counter));

    let conserved = glamor.add(&counter)?.bitwise_eq(&global.add(&local)?);
    println!("glamor + counter == global + local: {conserved}");
    Ok(())
}
