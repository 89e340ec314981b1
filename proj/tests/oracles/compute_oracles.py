"""Independent reference values frozen into the C++ tests.

Run with: python3 tests/oracles/compute_oracles.py
Uses mpmath (50 digits) and the standard library only; none of this shares
code with the C++ implementation.
"""
import binascii
import struct

import mpmath as mp

mp.mp.dps = 50
R = mp.mpf(6371000)


def central_angle(lat1, lon1, lat2, lon2):
    # Vector form: atan2(|a x b|, a . b), well conditioned everywhere.
    a = [mp.cos(lat1) * mp.cos(lon1), mp.cos(lat1) * mp.sin(lon1), mp.sin(lat1)]
    b = [mp.cos(lat2) * mp.cos(lon2), mp.cos(lat2) * mp.sin(lon2), mp.sin(lat2)]
    cx = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    cross = mp.sqrt(sum(c * c for c in cx))
    dot = sum(x * y for x, y in zip(a, b))
    return mp.atan2(cross, dot)


deg = mp.pi / 180
print("haversine (0,0)->(0.01deg,0.01deg):", mp.nstr(R * central_angle(0, 0, 0.01 * deg, 0.01 * deg), 20))
print("quarter circle:", mp.nstr(R * mp.pi / 2, 20))
print("equatorial arc 0.01deg:", mp.nstr(R * 0.01 * deg, 20))
print("tangent x at 60deg, 1e-4 rad:", mp.nstr(R * mp.cos(60 * deg) * mp.mpf("1e-4"), 20))
print("gronwall K=1 delta=0.01 t=1:", mp.nstr(mp.mpf("0.01") * (mp.e - 1), 20))
print("gronwall quad K=1 delta=0.01 t=1:",
      mp.nstr(mp.quad(lambda tau: mp.mpf("0.01") * mp.exp(1 - tau), [0, 1]), 20))
print("gronwall K=2 e0=0.05 delta(tau)=tau t=1.5:",
      mp.nstr(mp.mpf("0.05") * mp.exp(3) + mp.quad(lambda tau: 2 * tau * mp.exp(2 * (mp.mpf("1.5") - tau)), [0, mp.mpf("1.5")]), 20))
print("friction decel:", mp.nstr(mp.mpf("0.3") * 10 * mp.mpf("9.81") / 10, 20))
print("mmcf:", mp.nstr(mp.mpf("0.4") * mp.mpf("0.2") + mp.mpf("0.3") * mp.mpf("0.5")
                       + mp.mpf("0.2") * mp.mpf("0.1") + mp.mpf("0.1") * mp.mpf("0.8"), 20))

# Golden envelope: topic "/a", kind Pose(0), tier 0, flags 0, seq 1, t=0, empty payload.
def frame(topic, kind, tier, flags, seq, t_us, payload, version=1):
    t = topic.encode()
    body = b"TWBR" + struct.pack("<BBBQQH", version, tier, flags, seq, t_us, len(t)) + t
    body += struct.pack("<BI", kind, len(payload)) + payload
    return body + struct.pack("<I", binascii.crc32(body) & 0xFFFFFFFF)

f = frame("/a", 0, 0, 0, 1, 0, b"")
print("empty /a frame len:", len(f))
print("empty /a frame hex:", f.hex())
g = frame("/robot1/odom", 0, 1, 1, 0x0102030405060708, 1234567, bytes([0xDE, 0xAD, 0xBE, 0xEF]))
print("odom frame len:", len(g))
print("odom frame hex:", g.hex())
v2 = frame("/a", 0, 0, 0, 1, 0, b"", version=2)
print("version2 frame hex:", v2.hex())

# 100 random pairs for the geodesy acceptance check: 50 anywhere on the
# sphere, 50 within a few km of each other.
import random

rng = random.Random(20261016)
rows = []
for i in range(100):
    lat1 = rng.uniform(-1.5, 1.5)
    lon1 = rng.uniform(-3.1, 3.1)
    if i < 50:
        lat2 = rng.uniform(-1.5, 1.5)
        lon2 = rng.uniform(-3.1, 3.1)
    else:
        lat2 = lat1 + rng.uniform(-1e-3, 1e-3)
        lon2 = lon1 + rng.uniform(-1e-3, 1e-3)
    d = R * central_angle(mp.mpf(lat1), mp.mpf(lon1), mp.mpf(lat2), mp.mpf(lon2))
    rows.append(f"{lat1!r},{lon1!r},{lat2!r},{lon2!r},{mp.nstr(d, 25)}")

import pathlib

out = pathlib.Path(__file__).with_name("haversine_pairs.csv")
out.write_text("lat1,lon1,lat2,lon2,distance_m\n" + "\n".join(rows) + "\n")
print("wrote", out)
