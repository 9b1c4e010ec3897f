#!/usr/bin/env python3
"""Stitching per-frame scene graphs into one windowed temporal graph."""

from surgraph.dynamic_graph import (
    WindowConfig,
    build_dynamic_graph,
    context_seconds,
    select_window,
)
from surgraph.scene_graph import FeatureConfig, build_static_graph
from surgraph.synth import generate_sequence, preset_distinct_tools

# how much video a window covers, per dilation, at 1 fps
print("window  dilation  context")
for window, dilation in [(10, 1), (10, 3), (30, 3), (30, 10), (100, 3)]:
    print(f"{window:6d}  {dilation:8d}  {context_seconds(window, dilation, 1.0):6.0f} s")

# which frames a window actually samples (truncated near the video start)
print(f"\nframes ending at 90, window 5, dilation 3: {select_window(90, 5, 3)}")
print(f"frames ending at 4, same window:           {select_window(4, 5, 3)}")

# build the graphs for one window and stitch them
cfg = FeatureConfig(num_classes=17, use_temporal=True)
masks, track, _ = generate_sequence(preset_distinct_tools(n_frames=30, seed=1))
wanted = select_window(29, 5, 3)
graphs = [build_static_graph(masks[f], None, cfg) for f in wanted]
dyn = build_dynamic_graph(graphs, WindowConfig(window=5, dilation=3))

print(f"\nwindow over frames {dyn.frame_indices}, label frame {dyn.label_frame_index} "
      f"(phase {track.label_at(dyn.label_frame_index)})")
print(f"{len(dyn.nodes)} nodes across {dyn.window} timesteps")
print(f"{len(dyn.spatial_edges())} spatial edges (within a frame)")
print(f"{len(dyn.temporal_edges())} temporal edges (same class, consecutive steps)")

# per-timestep node counts, oldest to newest
for t in range(dyn.window):
    step = [n for n in dyn.nodes if n.t == t]
    print(f"  t={t} frame {dyn.frame_indices[t]}: "
          f"{len(step)} nodes, classes {[n.class_id for n in step]}")
