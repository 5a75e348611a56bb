# %% [markdown]
# # Detection probability over the bistatic angle
#
# Near 0 and 180 degrees the transmitter looks straight into the receiver
# and the LOS path becomes much stronger.  The sweep applies a raised
# cosine LOS gain profile and reports the pooled detection probability.

# %%
from delaydoppler.evaluation import los_gain_profile, run_sweep
from delaydoppler.signal_model import RadarGrid, default_scene, snr_to_noise_std

grid = RadarGrid(256, 64, 625e3, 100e-6)
angles = [0.0, 20.0, 90.0, 180.0]
print({a: los_gain_profile(a) for a in angles})

# %%
scene = default_scene(noise_std=snr_to_noise_std(20.0))
for subtract in (True, False):
    report = run_sweep(scene, angles, "cfar", frames_per_angle=20, seed=0, grid=grid,
                       background_subtraction=subtract)
    print("background subtraction" if subtract else "raw spectrum")
    for r in report.rows:
        print(f"  {r.angle_deg:5.0f} deg  LOS {r.los_gain_db:4.1f} dB  P_d {r.det_prob:.2f}  spheres {r.det_prob_spheres}")
