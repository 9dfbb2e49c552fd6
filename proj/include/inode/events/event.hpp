#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace inode {

struct SensorDims {
    std::uint32_t width = 34;
    std::uint32_t height = 34;
    friend bool operator==(const SensorDims&, const SensorDims&) = default;
};

// One DVS event. Timestamps are microseconds, already overflow-extended.
struct Event {
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::uint8_t p = 0;  // 1 = brightness increase
    std::uint64_t t = 0;
    friend bool operator==(const Event&, const Event&) = default;
};

struct EventSequence {
    std::vector<Event> events;
    int label = -1;  // -1 while unlabeled
    SensorDims dims;
    std::string id;

    std::size_t size() const noexcept { return events.size(); }
    friend bool operator==(const EventSequence&, const EventSequence&) = default;
};

enum class Split { train, test };

struct Dataset {
    std::vector<EventSequence> sequences;
    std::size_t class_count = 0;
    std::vector<std::string> class_names;
    SensorDims dims;
    Split split = Split::train;

    std::size_t size() const noexcept { return sequences.size(); }
};

}  // namespace inode
