#include <cctype>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstring>
#include <string>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "vtprune/calibration.hpp"

namespace vtprune {

namespace {

void ignore_sigpipe_once() {
    static const bool done = [] {
        std::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)done;
}

int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

struct ExternalScorer::Impl {
    pid_t pid = -1;
    int to_child = -1;     // write end
    int from_child = -1;   // read end
    int timeout_ms = 10000;
    std::string buffer;

    ~Impl() {
        if (to_child >= 0) close(to_child);
        if (from_child >= 0) close(from_child);
        if (pid > 0) {
            int status = 0;
            if (waitpid(pid, &status, WNOHANG) == 0) {
                // the child runs in its own process group so shell
                // grandchildren terminate too
                kill(-pid, SIGTERM);
                waitpid(pid, &status, 0);
            }
        }
    }

    // Reap the child and throw process_exit with its status.
    [[noreturn]] void throw_exit() {
        int status = 0;
        int code = -1;
        if (pid > 0 && waitpid(pid, &status, 0) == pid) {
            code = WIFEXITED(status) ? WEXITSTATUS(status) : -WTERMSIG(status);
            pid = -1;
        }
        throw Error(ErrorKind::process_exit, "scorer process exited", code);
    }

    void write_all(const std::string& line, int64_t deadline) {
        size_t off = 0;
        while (off < line.size()) {
            const int64_t left = deadline - now_ms();
            if (left <= 0) throw Error(ErrorKind::timeout, "timed out writing to scorer");
            pollfd pfd{to_child, POLLOUT, 0};
            const int pr = poll(&pfd, 1, static_cast<int>(left));
            if (pr <= 0) throw Error(ErrorKind::timeout, "timed out writing to scorer");
            const ssize_t n = write(to_child, line.data() + off, line.size() - off);
            if (n < 0) {
                if (errno == EPIPE) throw_exit();
                if (errno == EINTR || errno == EAGAIN) continue;
                throw Error(ErrorKind::io_error, std::strerror(errno));
            }
            off += static_cast<size_t>(n);
        }
    }

    std::string read_line(int64_t deadline) {
        for (;;) {
            const size_t nl = buffer.find('\n');
            if (nl != std::string::npos) {
                std::string line = buffer.substr(0, nl);
                buffer.erase(0, nl + 1);
                return line;
            }
            const int64_t left = deadline - now_ms();
            if (left <= 0) throw Error(ErrorKind::timeout, "timed out waiting for scorer reply");
            pollfd pfd{from_child, POLLIN, 0};
            const int pr = poll(&pfd, 1, static_cast<int>(left));
            if (pr == 0) throw Error(ErrorKind::timeout, "timed out waiting for scorer reply");
            if (pr < 0) {
                if (errno == EINTR) continue;
                throw Error(ErrorKind::io_error, std::strerror(errno));
            }
            char chunk[4096];
            const ssize_t n = read(from_child, chunk, sizeof(chunk));
            if (n == 0) throw_exit();
            if (n < 0) {
                if (errno == EINTR || errno == EAGAIN) continue;
                throw Error(ErrorKind::io_error, std::strerror(errno));
            }
            buffer.append(chunk, static_cast<size_t>(n));
        }
    }
};

ExternalScorer::ExternalScorer(std::vector<std::string> command, int timeout_ms)
    : impl_(new Impl) {
    if (command.empty()) throw Error(ErrorKind::scorer_failure, "empty scorer command");
    ignore_sigpipe_once();
    impl_->timeout_ms = timeout_ms;

    int in_pipe[2];    // parent -> child
    int out_pipe[2];   // child -> parent
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) {
        throw Error(ErrorKind::io_error, "pipe() failed");
    }
    const pid_t pid = fork();
    if (pid < 0) throw Error(ErrorKind::io_error, "fork() failed");
    if (pid == 0) {
        setpgid(0, 0);
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        close(in_pipe[0]);
        close(in_pipe[1]);
        close(out_pipe[0]);
        close(out_pipe[1]);
        std::vector<char*> argv;
        argv.reserve(command.size() + 1);
        for (std::string& s : command) argv.push_back(s.data());
        argv.push_back(nullptr);
        execvp(argv[0], argv.data());
        _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    impl_->pid = pid;
    impl_->to_child = in_pipe[1];
    impl_->from_child = out_pipe[0];
}

ExternalScorer::~ExternalScorer() = default;

double ExternalScorer::score(const ScoreRequest& req) {
    const int64_t deadline = now_ms() + impl_->timeout_ms;
    impl_->write_all(encode_request(req), deadline);
    const std::string line = impl_->read_line(deadline);
    try {
        size_t pos = 0;
        const double v = std::stod(line, &pos);
        // trailing whitespace is fine, anything else is not a score
        for (size_t i = pos; i < line.size(); ++i) {
            if (!std::isspace(static_cast<unsigned char>(line[i]))) {
                throw std::invalid_argument("trailing garbage");
            }
        }
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite");
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorKind::malformed_score, "scorer replied: \"" + line + "\"");
    }
}

}  // namespace vtprune
