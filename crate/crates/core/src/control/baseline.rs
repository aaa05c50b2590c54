/// Bang-bang thermostat: full heat below `t_ref - h`, full fan above `t_ref + h`.
pub fn baseline_thermostat(temperature_c: f64, t_ref: f64, hysteresis: f64) -> (f64, f64) {
    debug_assert!(hysteresis > 0.0);
    if temperature_c < t_ref - hysteresis {
        (1.0, 0.0)
    } else if temperature_c > t_ref + hysteresis {
        (0.0, 1.0)
    } else {
        (0.0, 0.0)
    }
}
