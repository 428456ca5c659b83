#pragma once

#include <string>

namespace gridfill {

// The synthetic task set. threshold is never generated at training time; it
// is the held-out task for generalization measurements.
enum class Task { segmentation, colorization, inversion, outline, identity, threshold };

constexpr Task kAllTasks[] = {Task::segmentation, Task::colorization, Task::inversion,
                              Task::outline,      Task::identity,     Task::threshold};
constexpr Task kTrainTasks[] = {Task::segmentation, Task::colorization, Task::inversion,
                                Task::outline, Task::identity};

const char *task_name(Task t);
bool parse_task(const std::string &name, Task &out);

}  // namespace gridfill
