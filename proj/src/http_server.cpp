#include <httplib.h>

#include "chartwave/errors.hpp"
#include "chartwave/service.hpp"

namespace chartwave {

struct HttpFrontend::Impl {
  httplib::Server server;
};

HttpFrontend::HttpFrontend(Service& service) : impl_(std::make_unique<Impl>()) {
  auto bridge = [&service](const httplib::Request& req, httplib::Response& res) {
    HttpRequest r;
    r.method = req.method;
    r.path = req.path;
    r.body = req.body;
    for (const auto& [k, v] : req.params) r.query[k] = v;
    for (const auto& [k, v] : req.headers) r.headers[k] = v;
    const HttpResponse out = service.handle(r);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  };
  impl_->server.Get(".*", bridge);
  impl_->server.Post(".*", bridge);
  impl_->server.Put(".*", bridge);
  impl_->server.Delete(".*", bridge);
}

HttpFrontend::~HttpFrontend() = default;

int HttpFrontend::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port))
    throw Error("cannot listen on " + host + ":" + std::to_string(port));
  return port;
}

void HttpFrontend::run() { impl_->server.listen_after_bind(); }

void HttpFrontend::stop() { impl_->server.stop(); }

void serve_http(Service& service, const std::string& host, int port) {
  HttpFrontend frontend(service);
  frontend.bind(host, port);
  frontend.run();
}

}  // namespace chartwave
