#!/usr/bin/env python3
"""Reference Ethernet/IPv4/TCP frame builder used to freeze golden bytes.

Written independently of the Rust serializer: plain struct.pack and a
textbook one's-complement checksum.
"""
import struct


def ones_complement_checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = 0
    for (word,) in struct.iter_unpack("!H", data):
        total += word
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return (~total) & 0xFFFF


def mac(s: str) -> bytes:
    return bytes(int(x, 16) for x in s.split(":"))


def ip(s: str) -> bytes:
    return bytes(int(x) for x in s.split("."))


def frame(src_mac, dst_mac, src_ip, dst_ip, sport, dport, flags, seq=0, ack=0,
          ttl=64, ident=0, frag=0x4000, window=8192, payload=b""):
    eth = mac(dst_mac) + mac(src_mac) + struct.pack("!H", 0x0800)
    total_len = 20 + 20 + len(payload)
    hdr = struct.pack("!BBHHHBBH4s4s", 0x45, 0, total_len, ident, frag, ttl, 6, 0,
                      ip(src_ip), ip(dst_ip))
    csum = ones_complement_checksum(hdr)
    hdr = hdr[:10] + struct.pack("!H", csum) + hdr[12:]
    tcp = struct.pack("!HHIIBBHHH", sport, dport, seq, ack, 5 << 4, flags, window, 0, 0)
    return eth + hdr + tcp + payload


if __name__ == "__main__":
    SYN = 0x02
    f = frame("08:00:00:00:01:11", "08:00:00:00:03:33", "10.0.1.1", "10.0.3.3",
              1234, 80, SYN, seq=1000)
    print(len(f), f.hex())
    g = frame("08:00:00:00:01:11", "08:00:00:00:03:33", "10.0.1.1", "10.0.3.3",
              1234, 80, SYN, seq=1000, ttl=63)
    print(len(g), g.hex())
    h = frame("08:00:00:00:02:22", "08:00:00:00:07:77", "10.0.2.2", "10.0.7.7",
              50000, 22, 0x18, seq=7, ack=9, payload=b"hello")
    print(len(h), h.hex())
