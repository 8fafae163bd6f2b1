#include <doctest.h>

#include <cstring>
#include <limits>
#include <random>
#include <set>
#include <thread>

#include "facecap/facesim.hpp"
#include "facecap/stream/assemble.hpp"
#include "facecap/stream/clock.hpp"
#include "facecap/stream/ingest.hpp"
#include "facecap/stream/packet.hpp"
#include "facecap/stream/replay.hpp"
#include "facecap/stream/tap.hpp"
#include "facecap/stream/udp.hpp"
#include "support.hpp"

using namespace facecap;
using namespace facecap::stream;
using testing::max_abs_diff;

namespace {

std::string hex(std::span<const std::uint8_t> b) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (i) s += ' ';
    s += digits[b[i] >> 4];
    s += digits[b[i] & 15];
  }
  return s;
}

SensorPacket random_packet(std::mt19937_64& rng) {
  SensorPacket p;
  p.kind = static_cast<PacketKind>(rng() % 3);
  p.sensor_id = static_cast<std::uint8_t>(rng());
  p.seq = static_cast<std::uint32_t>(rng());
  p.device_timestamp_us = rng();
  const auto q = testing::random_quat(rng);
  p.q = {static_cast<float>(q.w), static_cast<float>(q.x), static_cast<float>(q.y),
         static_cast<float>(q.z)};
  const auto a = testing::random_vec(rng, 200.0);
  p.a = {static_cast<float>(a.x), static_cast<float>(a.y), static_cast<float>(a.z)};
  return p;
}

void reseal(PacketBytes& b) {
  const auto crc = crc16_ccitt({b.data(), 45});
  b[45] = static_cast<std::uint8_t>(crc);
  b[46] = static_cast<std::uint8_t>(crc >> 8);
}

DecodeErrorKind decode_kind(std::span<const std::uint8_t> b) {
  try {
    decode_packet(b);
  } catch (const DecodeError& e) {
    return e.kind();
  }
  FAIL("decode succeeded");
  return DecodeErrorKind::short_buffer;
}

ClockModel identity_clock(std::size_t n) {
  ClockModel m;
  for (std::size_t i = 0; i < n; ++i) m.sensors[i] = {};
  return m;
}

std::vector<SensorStream> grid_streams(std::size_t sensors, std::size_t frames, std::mt19937_64& rng) {
  std::vector<SensorStream> out(sensors);
  for (std::size_t i = 0; i < sensors; ++i) {
    for (std::size_t j = 0; j < frames; ++j) {
      out[i].push_back({static_cast<std::uint32_t>(j), j * kFramePeriodUs,
                        {testing::random_vec(rng, 3.0), testing::random_quat(rng)}});
    }
  }
  return out;
}

RawSequence small_capture(std::size_t frames, std::optional<std::size_t> tap) {
  const auto rig = facesim::make_synthetic_rig();
  const auto w = facesim::generate_synthetic_weights(rig.blendshape_count(), frames, 1);
  facesim::SimulationConfig c;
  c.tap_frame = tap;
  return facesim::simulate_sequence(rig, w, {}, c).raw;
}

}  // namespace

TEST_CASE("crc16 check value") {
  const std::string s = "123456789";
  CHECK(crc16_ccitt({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}) == 0x29B1);
}

TEST_CASE("packet byte layout") {
  SensorPacket p;
  p.sensor_id = 3;
  p.seq = 1;
  p.device_timestamp_us = 1000000;
  const auto b = encode_packet(p);
  CHECK(hex(b) ==
        "fa ce 01 00 03 01 00 00 00 40 42 0f 00 00 00 00 00 00 00 80 3f 00 00 00 00 00 00 00 00 "
        "00 00 00 00 00 00 00 00 00 00 00 00 00 00 00 00 ff 3b");
  CHECK(decode_packet(b) == p);
}

TEST_CASE("packet round trip") {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 10000; ++i) {
    const auto p = random_packet(rng);
    CHECK(decode_packet(encode_packet(p)) == p);
  }
}

TEST_CASE("single-bit corruption is always rejected") {
  std::mt19937_64 rng(32);
  for (int i = 0; i < 50; ++i) {
    const auto good = encode_packet(random_packet(rng));
    for (std::size_t bit = 0; bit < kPacketSize * 8; ++bit) {
      auto bad = good;
      bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      CHECK_THROWS_AS(decode_packet(bad), DecodeError);
    }
  }
}

TEST_CASE("decode error kinds") {
  const auto good = encode_packet(SensorPacket{});
  CHECK(decode_kind(std::span(good).first(46)) == DecodeErrorKind::short_buffer);
  CHECK(decode_kind({}) == DecodeErrorKind::short_buffer);
  std::vector<std::uint8_t> longer(good.begin(), good.end());
  longer.push_back(0);
  CHECK(decode_kind(longer) == DecodeErrorKind::bad_length);

  auto b = good;
  b[0] = 0x00;
  reseal(b);
  CHECK(decode_kind(b) == DecodeErrorKind::bad_magic);
  b = good;
  b[2] = 2;
  reseal(b);
  CHECK(decode_kind(b) == DecodeErrorKind::bad_version);
  b = good;
  b[46] ^= 1;
  CHECK(decode_kind(b) == DecodeErrorKind::bad_crc);
  b = good;
  b[3] = 9;
  reseal(b);
  CHECK(decode_kind(b) == DecodeErrorKind::bad_kind);
  b = good;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(b.data() + 33, &nan, 4);
  reseal(b);
  CHECK(decode_kind(b) == DecodeErrorKind::non_finite);
  b = good;
  const float two = 2.0f;
  std::memcpy(b.data() + 17, &two, 4);
  reseal(b);
  CHECK(decode_kind(b) == DecodeErrorKind::non_unit_quaternion);

  SensorPacket inf;
  inf.a[1] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(encode_packet(inf), std::invalid_argument);
}

TEST_CASE("clock fit hand cases") {
  std::vector<SyncPulse> same, shifted, drifted;
  for (int k = 0; k < 20; ++k) {
    const double h = k * 500000.0;
    same.push_back({h, h});
    shifted.push_back({h, h + 5000.0});
    drifted.push_back({h, h * 1.0001 + 2000.0});
  }
  auto c = fit_clock(same);
  CHECK(c.offset_us == 0.0);
  CHECK(c.drift_ppm == 0.0);
  c = fit_clock(shifted);
  CHECK(std::abs(c.offset_us - 5000.0) < 1e-9);
  CHECK(std::abs(c.drift_ppm) < 1e-9);
  c = fit_clock(drifted);
  CHECK(std::abs(c.drift_ppm - 100.0) < 1e-9);
  CHECK(std::abs(c.offset_us - 2000.0) < 1e-9);
  CHECK(c.rms_residual_us < 1e-6);

  ClockModel m;
  m.sensors[0] = fit_clock(shifted);
  CHECK(std::abs(to_host_time(m, 0, 15000.0) - 10000.0) < 1e-9);
  CHECK(to_host_time(identity_clock(1), 0, 1234.5) == 1234.5);
  m.sensors[1] = fit_clock(drifted);
  CHECK(std::abs(to_host_time(m, 1, 1e6 * 1.0001 + 2000.0) - 1e6) < 1e-6);
  CHECK_THROWS_AS(to_host_time(m, 7, 0.0), ClockError);
}

TEST_CASE("clock fit edge cases") {
  CHECK_THROWS_AS(fit_clock({}), ClockError);
  const std::vector<SyncPulse> one{{1000.0, 6000.0}};
  const auto c = fit_clock(one);
  CHECK(c.offset_us == 5000.0);
  CHECK(c.drift_ppm == 0.0);
  std::vector<SyncPulse> wild;
  for (int k = 0; k < 5; ++k) wild.push_back({k * 1e6, k * 1e6 * 1.01});
  CHECK_THROWS_AS(fit_clock(wild), ClockError);
  std::map<std::size_t, std::vector<SyncPulse>> pulses{{3, wild}};
  CHECK_THROWS_WITH_AS(estimate_clock(pulses), doctest::Contains("sensor 3"), ClockError);
}

TEST_CASE("clock fit under jitter stays within bounds") {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> jitter(-200.0, 200.0);
  std::uniform_real_distribution<double> off(-1e5, 1e5), drift(-500.0, 500.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double o = off(rng), d = drift(rng);
    std::vector<SyncPulse> p;
    for (int k = 0; k < 20; ++k) {
      const double h = k * 500000.0;
      p.push_back({h, h * (1 + d * 1e-6) + o + jitter(rng)});
    }
    const auto c = fit_clock(p);
    CHECK(std::abs(c.offset_us - o) < 200.0);
    CHECK(std::abs(c.drift_ppm - d) < 100.0);
    CHECK(c.rms_residual_us <= 200.0);
    ClockModel m;
    m.sensors[0] = c;
    for (int k = 0; k < 20; ++k) {
      const double h = k * 500000.0 + 1234.0;
      CHECK(std::abs(to_host_time(m, 0, h * (1 + d * 1e-6) + o) - h) < 1000.0);
    }
  }
}

TEST_CASE("tap detection") {
  std::vector<double> flat(100, 9.81);
  CHECK_THROWS_AS(detect_tap(flat), TapError);
  CHECK_THROWS_AS(detect_tap(std::vector<double>(10, 0.0)), TapError);

  std::vector<double> spike(100, 0.0);
  spike[42] = 30.0;
  auto e = detect_tap(spike);
  CHECK(e.frame == 42);
  CHECK(e.peak == 30.0);

  spike[70] = 50.0;
  CHECK(detect_tap(spike).frame == 42);

  std::vector<double> burst(100, 0.0);
  burst[50] = 5.0;
  burst[51] = 12.0;
  burst[52] = 3.0;
  e = detect_tap(burst);
  CHECK(e.frame == 50);
  CHECK(e.peak == 12.0);

  std::mt19937_64 rng(34);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<Vec3> acc;
  for (int j = 0; j < 200; ++j) acc.push_back({noise(rng), noise(rng), 9.81 + noise(rng)});
  CHECK_THROWS_AS(detect_tap(acc), TapError);
  acc[120].z += 30.0;
  CHECK(detect_tap(acc).frame == 120);
}

TEST_CASE("assembly passthrough when on grid") {
  std::mt19937_64 rng(35);
  const auto streams = grid_streams(3, 20, rng);
  const auto buf = assemble_frames(streams, identity_clock(3));
  REQUIRE(buf.sequence.frame_count() == 20);
  CHECK(buf.count(SlotSource::measured) == 60);
  for (std::size_t j = 0; j < 20; ++j) {
    CHECK(buf.sequence.frames[j].host_time_us == doctest::Approx(j * kFramePeriodUs));
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(buf.sequence.frames[j].sensors[i].orientation == streams[i][j].sample.orientation);
      CHECK(buf.sequence.frames[j].sensors[i].acceleration == streams[i][j].sample.acceleration);
    }
  }
}

TEST_CASE("assembly interpolates a single drop") {
  std::mt19937_64 rng(36);
  auto streams = grid_streams(2, 12, rng);
  const auto a = streams[1][4].sample, b = streams[1][6].sample;
  streams[1].erase(streams[1].begin() + 5);
  const auto buf = assemble_frames(streams, identity_clock(2));
  CHECK(buf.provenance[5][1] == SlotSource::interpolated);
  CHECK(buf.provenance[5][0] == SlotSource::measured);
  const auto& s = buf.sequence.frames[5].sensors[1];
  CHECK(quat_angle_between(s.orientation, slerp(a.orientation, b.orientation, 0.5)) < 1e-7);
  CHECK(max_abs_diff(s.acceleration, (a.acceleration + b.acceleration) * 0.5) < 1e-12);
}

TEST_CASE("assembly holds across a long gap") {
  std::mt19937_64 rng(37);
  auto streams = grid_streams(2, 15, rng);
  const auto before = streams[0][2].sample;
  streams[0].erase(streams[0].begin() + 3, streams[0].begin() + 8);
  const auto buf = assemble_frames(streams, identity_clock(2));
  for (std::size_t j = 3; j < 8; ++j) {
    CHECK(buf.provenance[j][0] == SlotSource::held);
    CHECK(buf.sequence.frames[j].sensors[0].acceleration == before.acceleration);
  }
  CHECK(buf.provenance[8][0] == SlotSource::measured);
  CHECK(buf.count(SlotSource::held) == 5);
}

TEST_CASE("assembly orders, deduplicates and converts clocks") {
  std::mt19937_64 rng(38);
  auto streams = grid_streams(1, 10, rng);
  auto shuffled = streams[0];
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  auto dup = streams[0][3];
  dup.sample.acceleration = {99, 99, 99};
  shuffled.push_back(dup);
  const auto ordered = order_stream(shuffled);
  REQUIRE(ordered.size() == 10);
  for (std::size_t j = 0; j < 10; ++j) CHECK(ordered[j].seq == j);
  CHECK(ordered[3].sample.acceleration == streams[0][3].sample.acceleration);

  for (auto& s : shuffled) s.device_timestamp_us = s.device_timestamp_us * 1.0002 + 7000.0;
  ClockModel m;
  m.sensors[0] = {7000.0, 200.0, 2, 0.0};
  const auto buf = assemble_frames({shuffled}, m);
  CHECK(buf.sequence.frame_count() == 10);
  CHECK(buf.count(SlotSource::measured) == 10);
  CHECK(buf.sequence.frames[3].sensors[0].acceleration == streams[0][3].sample.acceleration);

  CHECK_THROWS_AS(assemble_frames({SensorStream{}}, identity_clock(1)), AssemblyError);
  CHECK_THROWS_AS(assemble_frames(streams, ClockModel{}), ClockError);

  auto trimmed = assemble_frames(streams, identity_clock(1));
  trimmed.trim_front(4);
  CHECK(trimmed.sequence.frame_count() == 6);
  CHECK(trimmed.start_us == doctest::Approx(4 * kFramePeriodUs));
}

TEST_CASE("replay plan is deterministic and complete") {
  const auto raw = small_capture(120, std::nullopt);
  FaultConfig f;
  f.jitter_us = 300.0;
  f.drop_fraction = 0.1;
  f.seed = 5;
  const auto a = plan_replay(raw, f);
  const auto b = plan_replay(raw, f);
  REQUIRE(a.packets.size() == b.packets.size());
  for (std::size_t i = 0; i < a.packets.size(); ++i) CHECK(a.packets[i].packet == b.packets[i].packet);
  const std::size_t data = raw.frame_count() * raw.sensor_count();
  const std::size_t sent_data = a.packets.size() - a.sync_pulses * raw.sensor_count();
  CHECK(sent_data + a.dropped == data);
  CHECK(a.dropped > data / 20);
  CHECK(a.dropped < data / 5);
  for (std::size_t i = 1; i < a.packets.size(); ++i) {
    CHECK(a.packets[i - 1].send_time_us <= a.packets[i].send_time_us);
  }
  f.seed = 6;
  CHECK(plan_replay(raw, f).dropped != a.dropped);
}

TEST_CASE("seeded drops produce the scripted provenance") {
  const auto raw = small_capture(300, std::nullopt);
  FaultConfig f;
  f.drop_fraction = 0.1;
  f.seed = 11;
  const auto plan = plan_replay(raw, f);
  const std::size_t n = raw.sensor_count();
  std::vector<std::set<std::uint32_t>> kept(n);
  std::vector<SensorPacket> packets;
  for (const auto& sp : plan.packets) {
    packets.push_back(sp.packet);
    if (sp.packet.kind == PacketKind::data) kept[sp.packet.sensor_id].insert(sp.packet.seq);
  }
  IngestOptions opt;
  opt.align_to_tap = false;
  const auto res = ingest_packets(packets, opt);
  CHECK(res.warnings.size() == 1);
  CHECK_FALSE(res.tap);

  std::uint32_t first = UINT32_MAX, last = 0;
  for (const auto& k : kept) {
    first = std::min(first, *k.begin());
    last = std::max(last, *k.rbegin());
  }
  REQUIRE(res.buffer.sequence.frame_count() == last - first + 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint32_t j = first; j <= last; ++j) {
      SlotSource expect = SlotSource::measured;
      if (!kept[i].count(j)) {
        const auto next = kept[i].upper_bound(j);
        const auto prev_it = kept[i].lower_bound(j);
        const bool has_prev = prev_it != kept[i].begin();
        const bool has_next = next != kept[i].end();
        expect = (has_prev && has_next && *next - *std::prev(prev_it) <= 3) ? SlotSource::interpolated
                                                                              : SlotSource::held;
      }
      CHECK(res.buffer.provenance[j - first][i] == expect);
    }
  }
}

TEST_CASE("zero-fault offline ingest reproduces the capture") {
  const auto raw = small_capture(200, 45);
  const auto plan = plan_replay(raw, {});
  std::vector<std::vector<std::uint8_t>> datagrams;
  for (const auto& sp : plan.packets) {
    const auto b = encode_packet(sp.packet);
    datagrams.emplace_back(b.begin(), b.end());
  }
  const auto res = ingest_datagrams(datagrams, {});
  REQUIRE(res.tap);
  CHECK(res.tap->frame == 45);
  CHECK(res.warnings.empty());
  REQUIRE(res.sequence.frame_count() == raw.frame_count() - 45);
  CHECK(res.buffer.count(SlotSource::measured) == res.sequence.frame_count() * raw.sensor_count());
  for (std::size_t j = 0; j < res.sequence.frame_count(); ++j) {
    for (std::size_t i = 0; i < raw.sensor_count(); ++i) {
      const auto& got = res.sequence.frames[j].sensors[i];
      const auto& want = raw.frames[j + 45].sensors[i];
      CHECK(quat_angle_between(got.orientation, want.orientation) < 1e-5);
      CHECK(max_abs_diff(got.acceleration, want.acceleration) < 1e-5 * (1.0 + norm(want.acceleration)));
    }
  }
}

TEST_CASE("ingest recovers an injected clock offset") {
  const auto raw = small_capture(600, 45);
  FaultConfig f;
  for (std::size_t i = 0; i < raw.sensor_count(); ++i) f.clocks[i] = {5000.0, 0.0};
  const auto plan = plan_replay(raw, f);
  std::vector<SensorPacket> packets;
  for (const auto& sp : plan.packets) packets.push_back(sp.packet);
  const auto res = ingest_packets(packets, {});
  for (const auto& [id, c] : res.clock.sensors) CHECK(std::abs(c.offset_us - 5000.0) < 1.0);
  CHECK(res.tap->frame == 45);
}

TEST_CASE("ingest failure modes") {
  const auto raw = small_capture(100, std::nullopt);
  const auto plan = plan_replay(raw, {});
  std::vector<std::vector<std::uint8_t>> flood;
  for (const auto& sp : plan.packets) {
    auto b = encode_packet(sp.packet);
    b[0] = 0x00;
    flood.emplace_back(b.begin(), b.end());
  }
  try {
    ingest_datagrams(flood, {});
    FAIL("expected IngestError");
  } catch (const IngestError&) {
  }

  std::vector<SensorPacket> no_sync, missing;
  for (const auto& sp : plan.packets) {
    if (sp.packet.kind == PacketKind::data) no_sync.push_back(sp.packet);
    if (sp.packet.sensor_id != 4) missing.push_back(sp.packet);
  }
  CHECK_THROWS_WITH_AS(ingest_packets(no_sync, {}), doctest::Contains("sync"), IngestError);
  CHECK_THROWS_WITH_AS(ingest_packets(missing, {}), doctest::Contains("sensor 4"), IngestError);

  std::vector<std::vector<std::uint8_t>> mixed;
  for (const auto& sp : plan.packets) {
    const auto b = encode_packet(sp.packet);
    mixed.emplace_back(b.begin(), b.end());
  }
  mixed.push_back({1, 2, 3});
  const auto res = ingest_datagrams(mixed, {});
  CHECK(res.stats.decode_errors == 1);
  CHECK(res.stats.decode_errors_by_kind.at("short_buffer") == 1);
  CHECK_FALSE(res.tap);
  CHECK(res.sequence.frame_count() == 100);
}

TEST_CASE("udp loopback capture") {
  const auto raw = small_capture(240, 45);
  UdpSocket rx(Endpoint{"127.0.0.1", 0});
  const auto port = rx.local_port();
  CHECK(port != 0);
  IngestOptions opt;
  opt.idle_timeout = std::chrono::milliseconds(500);
  opt.duration = std::chrono::milliseconds(20000);
  std::optional<IngestResult> res;
  std::jthread receiver([&] { res = ingest(rx, opt); });
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  const auto stats = replay(raw, {"127.0.0.1", port}, {});
  receiver.join();
  REQUIRE(res);
  CHECK(res->stats.data_packets == raw.frame_count() * raw.sensor_count());
  CHECK(res->stats.sync_packets == stats.sync_pulses * raw.sensor_count());
  CHECK(res->tap->frame == 45);
  CHECK(res->sequence.frame_count() == raw.frame_count() - 45);

  CHECK_THROWS_AS(UdpSocket(Endpoint{"not-an-address", 0}), SocketError);
  try {
    UdpSocket clash(Endpoint{"127.0.0.1", port});
    FAIL("expected address in use");
  } catch (const SocketError& e) {
    CHECK(e.address_in_use());
  }
}
