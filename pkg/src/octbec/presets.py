"""Named experiment configurations.

Each preset is a partial config (see :mod:`octbec.config`); anything it
leaves out takes the built-in default. Domains are chosen so that every
state involved decays to well below the edge-density warning level.

``fig5_tabulated_2d`` needs ``[potential] file``: a tabulated potential
(see :func:`octbec.fileio.write_tabulated_potential`) on the preset's 2D grid,
for example an rf-dressed trap sampled with the rf amplitude law
``B_rf = 0.5 G + lambda * 0.3 G``.
"""

SINGLE_WELL_GRID = {"x_min": -10.0, "x_max": 15.0, "n_x": 500, "n_t": 500}
DOUBLE_WELL_GRID = {"x_min": -16.0, "x_max": 16.0, "n_x": 500, "n_t": 500}

_fig1 = {
    "experiment": "optimize",
    "grid": dict(SINGLE_WELL_GRID, t_final=9.0),
    "potential": {"family": "shifted_harmonic", "x0": 5.0},
    "oct": {"enabled": True},
}

_double_well_sweep = {
    "experiment": "sweep",
    "grid": dict(DOUBLE_WELL_GRID, t_final=8.0),
    "potential": {"family": "double_well", "d": 6.0},
    "solver": {"scheme": "split_operator_nonlinear", "g": 0.0},
    "sweep": {"t_start": 2.0, "t_stop": 12.0, "t_step": 1.0},
    "oct": {"enabled": False},
}

_nonlinear_map = {
    "experiment": "sweep",
    "grid": dict(DOUBLE_WELL_GRID, t_final=8.0),
    "potential": {"family": "double_well", "d": 6.0},
    "solver": {"scheme": "split_operator_nonlinear"},
    "sweep": {"t_start": 2.0, "t_stop": 12.0, "t_step": 1.0, "kappa_values": [0.0, 5.0, 10.0, 20.0]},
    "oct": {"enabled": False},
}

PRESETS = {
    "fig1_single_well": _fig1,
    "fig1_quartic": {
        **_fig1,
        "potential": {"family": "shifted_harmonic_quartic", "x0": 5.0, "eta": 0.2},
    },
    "single_well_T9_linear": {
        "experiment": "propagate",
        "grid": dict(SINGLE_WELL_GRID, t_final=9.0),
        "potential": {"family": "shifted_harmonic", "x0": 5.0},
        "control": {"initial": "linear"},
    },
    "sweep_single_well": {
        "experiment": "sweep",
        "grid": dict(SINGLE_WELL_GRID, t_final=9.0),
        "potential": {"family": "shifted_harmonic", "x0": 5.0},
        "sweep": {"t_start": 1.0, "t_stop": 12.0, "t_step": 0.25},
        "oct": {"enabled": False},
    },
    "fig3_double_well": {
        "experiment": "optimize",
        "grid": dict(DOUBLE_WELL_GRID, t_final=6.0),
        "potential": {"family": "double_well", "d": 6.0},
        "oct": {"enabled": True},
    },
    "double_well_sweep": _double_well_sweep,
    "fig4_three_wire": {
        "experiment": "optimize",
        "grid": {"x_min": -5.0, "x_max": 5.0, "n_x": 256, "t_final": 2.0, "n_t": 500, "time_unit": "ms"},
        "potential": {"family": "three_wire_trap", "subtract_offset": True},
        "oct": {"enabled": True, "max_iterations": 200},
    },
    "fig5_tabulated_2d": {
        "experiment": "optimize",
        "grid": {
            "x_min": -8.0, "x_max": 8.0, "n_x": 256,
            "y_min": -4.0, "y_max": 4.0, "n_y": 64,
            "t_final": 6.0, "n_t": 500,
        },
        "potential": {"family": "tabulated", "file": ""},
        "solver": {"scheme": "split_operator"},
        "oct": {"enabled": True, "max_iterations": 100},
    },
    "fig6_nonlinear_map": _nonlinear_map,
    "nonlinear_map": _nonlinear_map,
    "spatial_channel": {
        "experiment": "optimize_spatial",
        "grid": {
            "x_min": -20.0, "x_max": 28.0, "n_x": 256,
            "y_min": -5.0, "y_max": 7.0, "n_y": 64,
            "t_final": 5.0, "n_t": 500,
        },
        "potential": {"family": "shifting_channel", "y0": 2.0, "omega": 1.0},
        "states": {
            "initial": "packet", "desired": "packet",
            "packet_center": -8.0, "packet_width": 1.5, "packet_momentum": 4.0,
        },
        "spatial": {"region_start": 0.0, "region_stop": 10.0},
        "oct": {"enabled": True, "max_iterations": 60},
    },
}
