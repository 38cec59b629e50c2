#include "ttc/util/subprocess.hpp"
#include "ttc/errors.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

namespace ttc::util {

namespace {

void set_cloexec(int fd) { ::fcntl(fd, F_SETFD, FD_CLOEXEC); }

} // namespace

RunResult run_command(const std::string& command,
                      const std::filesystem::path& workdir,
                      const ResourceCaps& caps) {
    int out_pipe[2];
    int err_pipe[2];
    if (::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0)
        throw EnvironmentError("pipe() failed: " + std::string(std::strerror(errno)));

    auto start = std::chrono::steady_clock::now();
    pid_t pid = ::fork();
    if (pid < 0)
        throw EnvironmentError("fork() failed: " + std::string(std::strerror(errno)));

    if (pid == 0) {
        ::setpgid(0, 0);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(err_pipe[1], STDERR_FILENO);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::close(err_pipe[0]);
        ::close(err_pipe[1]);
        if (::chdir(workdir.c_str()) != 0) _exit(127);

        rlimit mem{caps.memory_bytes, caps.memory_bytes};
        ::setrlimit(RLIMIT_AS, &mem);
        rlimit cpu{caps.cpu_seconds, caps.cpu_seconds};
        ::setrlimit(RLIMIT_CPU, &cpu);

        ::execl("/bin/sh", "sh", "-c", command.c_str(), nullptr);
        _exit(127);
    }

    ::setpgid(pid, pid); // also from the parent side, closing the race
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    set_cloexec(out_pipe[0]);
    set_cloexec(err_pipe[0]);

    RunResult result;
    auto deadline = start + caps.wall_limit;
    bool out_open = true, err_open = true;
    char buf[4096];

    while (out_open || err_open) {
        auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            result.timed_out = true;
            ::kill(-pid, SIGKILL);
            break;
        }
        int remaining = static_cast<int>(
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count());

        pollfd fds[2];
        nfds_t n = 0;
        if (out_open) fds[n++] = {out_pipe[0], POLLIN, 0};
        if (err_open) fds[n++] = {err_pipe[0], POLLIN, 0};

        int rc = ::poll(fds, n, remaining > 0 ? remaining : 1);
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (rc == 0) continue; // re-check the deadline

        for (nfds_t i = 0; i < n; ++i) {
            if (!(fds[i].revents & (POLLIN | POLLHUP))) continue;
            bool is_out = (fds[i].fd == out_pipe[0]);
            ssize_t got = ::read(fds[i].fd, buf, sizeof buf);
            if (got > 0) {
                (is_out ? result.stdout_text : result.stderr_text).append(buf, got);
            } else {
                (is_out ? out_open : err_open) = false;
            }
        }
    }

    // Drain whatever arrived before a timeout kill.
    for (int fd : {out_pipe[0], err_pipe[0]}) {
        ::fcntl(fd, F_SETFL, O_NONBLOCK);
        ssize_t got;
        while ((got = ::read(fd, buf, sizeof buf)) > 0)
            (fd == out_pipe[0] ? result.stdout_text : result.stderr_text).append(buf, got);
        ::close(fd);
    }

    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {}
    if (result.timed_out) {
        ::kill(-pid, SIGKILL); // stragglers in the group
    }
    if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.signaled = true;
        result.exit_code = 128 + WTERMSIG(status);
    }
    result.wall_time = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - start);
    return result;
}

} // namespace ttc::util
