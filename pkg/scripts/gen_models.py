"""Generate the bundled synthetic model files."""
import json, os

OUT = os.path.join(os.path.dirname(__file__), "..", "src", "balance", "models")

def diag(a, b, c):
    return [a, 0, 0, 0, b, 0, 0, 0, c]

def desk_humanoid():
    links = [
        {"name": "torso", "mass": 12.0, "com": [0.0, 0.0, 0.10],
         "inertia": diag(0.20, 0.20, 0.10)},
    ]
    joints = []
    frames = []
    for side, sy in (("left", 1.0), ("right", -1.0)):
        links += [
            {"name": f"{side}_hip_1", "mass": 0.8, "com": [0, 0, 0],
             "inertia": diag(0.002, 0.002, 0.002)},
            {"name": f"{side}_hip_2", "mass": 0.8, "com": [0, 0, 0],
             "inertia": diag(0.002, 0.002, 0.002)},
            {"name": f"{side}_thigh", "mass": 2.0, "com": [0, 0, -0.15],
             "inertia": diag(0.020, 0.020, 0.004)},
            {"name": f"{side}_shank", "mass": 1.5, "com": [0, 0, -0.15],
             "inertia": diag(0.015, 0.015, 0.003)},
            {"name": f"{side}_ankle", "mass": 0.4, "com": [0, 0, 0],
             "inertia": diag(0.001, 0.001, 0.001)},
            {"name": f"{side}_foot", "mass": 0.6, "com": [0.02, 0, -0.03],
             "inertia": diag(0.002, 0.004, 0.004)},
            {"name": f"{side}_upper_arm", "mass": 1.0, "com": [0, 0, -0.12],
             "inertia": diag(0.010, 0.010, 0.002)},
        ]
        joints += [
            {"name": f"{side}_hip_yaw", "parent": "torso", "child": f"{side}_hip_1",
             "origin_xyz": [0.0, sy * 0.10, -0.05], "origin_rpy": [0, 0, 0], "axis": [0, 0, 1]},
            {"name": f"{side}_hip_roll", "parent": f"{side}_hip_1", "child": f"{side}_hip_2",
             "origin_xyz": [0, 0, 0], "origin_rpy": [0, 0, 0], "axis": [1, 0, 0]},
            {"name": f"{side}_hip_pitch", "parent": f"{side}_hip_2", "child": f"{side}_thigh",
             "origin_xyz": [0, 0, 0], "origin_rpy": [0, 0, 0], "axis": [0, 1, 0]},
            {"name": f"{side}_knee", "parent": f"{side}_thigh", "child": f"{side}_shank",
             "origin_xyz": [0, 0, -0.30], "origin_rpy": [0, 0, 0], "axis": [0, 1, 0]},
            {"name": f"{side}_ankle_pitch", "parent": f"{side}_shank", "child": f"{side}_ankle",
             "origin_xyz": [0, 0, -0.30], "origin_rpy": [0, 0, 0], "axis": [0, 1, 0]},
            {"name": f"{side}_ankle_roll", "parent": f"{side}_ankle", "child": f"{side}_foot",
             "origin_xyz": [0, 0, 0], "origin_rpy": [0, 0, 0], "axis": [1, 0, 0]},
            {"name": f"{side}_shoulder_pitch", "parent": "torso", "child": f"{side}_upper_arm",
             "origin_xyz": [0.0, sy * 0.16, 0.25], "origin_rpy": [0, 0, 0], "axis": [0, 1, 0]},
        ]
        frames.append({"name": f"{side}_sole", "link": f"{side}_foot",
                       "origin_xyz": [0.02, 0.0, -0.05], "origin_rpy": [0, 0, 0]})
    # joint order: both legs first, then the two shoulders
    legs = [j for j in joints if "shoulder" not in j["name"]]
    arms = [j for j in joints if "shoulder" in j["name"]]
    return {"name": "desk_humanoid", "base_link": "torso", "links": links,
            "joints": legs + arms, "frames": frames}

def pendulum_foot():
    links = [{"name": "foot", "mass": 1.5, "com": [0.01, 0.0, 0.02],
              "inertia": diag(0.003, 0.005, 0.006)}]
    joints = []
    axes = [[0, 1, 0], [1, 0, 0], [0, 1, 0], [1, 0, 0], [0, 1, 0], [1, 0, 0], [0, 0, 1]]
    prev = "foot"
    for i, ax in enumerate(axes, start=1):
        links.append({"name": f"seg{i}", "mass": 0.8, "com": [0, 0, 0.075],
                      "inertia": diag(0.004, 0.004, 0.001)})
        joints.append({"name": f"j{i}", "parent": prev, "child": f"seg{i}",
                       "origin_xyz": [0, 0, 0.05 if i == 1 else 0.15],
                       "origin_rpy": [0, 0, 0], "axis": ax})
        prev = f"seg{i}"
    frames = [
        {"name": "left_sole", "link": "foot", "origin_xyz": [0.0, 0.03, -0.02],
         "origin_rpy": [0, 0, 0]},
        {"name": "right_sole", "link": "foot", "origin_xyz": [0.0, -0.03, -0.02],
         "origin_rpy": [0, 0, 0]},
    ]
    return {"name": "pendulum_foot", "base_link": "foot", "links": links,
            "joints": joints, "frames": frames}

if __name__ == "__main__":
    for fn, builder in (("desk_humanoid.json", desk_humanoid),
                        ("pendulum_foot.json", pendulum_foot)):
        path = os.path.join(OUT, fn)
        with open(path, "w") as fh:
            json.dump(builder(), fh, indent=1)
        print("wrote", path)
