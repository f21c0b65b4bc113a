//! Static SVG line charts of command results.

use plotters::prelude::*;

const SIZE: (u32, u32) = (900, 560);

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values
        .filter(|v| v.is_finite())
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
}

fn padded((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi > lo {
        let pad = 0.04 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Renders one or more `(label, points)` series. With `log_y` only positive
/// values are drawn.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
    log_y: bool,
) -> String {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        // drawing into a string cannot fail
        let _ = draw(&root, title, x_label, y_label, series, log_y);
        let _ = root.present();
    }
    svg
}

fn draw(
    root: &DrawingArea<SVGBackend<'_>, plotters::coord::Shift>,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
    log_y: bool,
) -> Result<(), Box<dyn std::error::Error>> {
    root.fill(&WHITE)?;
    let keep = |y: f64| !log_y || y > 0.0;
    let all = || series.iter().flat_map(|(_, p)| p.iter()).filter(|p| keep(p.1));
    let x = padded(bounds(all().map(|p| p.0)).unwrap_or((0.0, 1.0)));
    let y = bounds(all().map(|p| p.1)).unwrap_or((1e-6, 1.0));
    let mut chart = ChartBuilder::on(root);
    chart
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(44)
        .y_label_area_size(72);

    let palette = [&BLUE, &RED, &GREEN, &MAGENTA, &CYAN, &BLACK];
    if log_y {
        let (lo, hi) = (y.0 * 0.8, (y.1 * 1.25).max(y.0 * 10.0));
        let mut ctx = chart.build_cartesian_2d(x.0..x.1, (lo..hi).log_scale())?;
        ctx.configure_mesh().x_desc(x_label).y_desc(y_label).draw()?;
        for (i, (label, pts)) in series.iter().enumerate() {
            let color = palette[i % palette.len()];
            ctx.draw_series(LineSeries::new(pts.iter().copied().filter(|p| keep(p.1)), color))?
                .label(label.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color));
        }
        ctx.configure_series_labels().border_style(BLACK).background_style(WHITE).draw()?;
    } else {
        let y = padded(y);
        let mut ctx = chart.build_cartesian_2d(x.0..x.1, y.0..y.1)?;
        ctx.configure_mesh().x_desc(x_label).y_desc(y_label).draw()?;
        for (i, (label, pts)) in series.iter().enumerate() {
            let color = palette[i % palette.len()];
            ctx.draw_series(LineSeries::new(pts.iter().copied(), color))?
                .label(label.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color));
        }
        ctx.configure_series_labels().border_style(BLACK).background_style(WHITE).draw()?;
    }
    Ok(())
}
