/// gncoder/errors.hpp
///
/// Exception types raised by the library. Every error derives from
/// gncoder::Error so callers can catch the whole family in one place.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gncoder
{
    class Error : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    /// Grid dimension or resolution out of range.
    class SizeError : public Error
    {
    public:
        using Error::Error;
    };

    /// Grid functions or operators living on different grids.
    class IncompatibleError : public Error
    {
    public:
        using Error::Error;
    };

    /// Requested derivative order is not available for an activation.
    class SmoothnessError : public Error
    {
    public:
        using Error::Error;
    };

    /// Parameter vector / direction lengths inconsistent with the network shape.
    class ShapeError : public Error
    {
    public:
        using Error::Error;
    };

    class RangeError : public Error
    {
    public:
        using Error::Error;
    };

    class UnsupportedDimensionError : public Error
    {
    public:
        using Error::Error;
    };

    /// Every column fell below the rank tolerance.
    class ZeroMatrixError : public Error
    {
    public:
        using Error::Error;
    };

    class RankError : public Error
    {
    public:
        RankError(const std::string &what, std::size_t deficit)
            : Error(what), deficit_(deficit)
        { }

        std::size_t deficit() const noexcept
        {
            return deficit_;
        }

    private:
        std::size_t deficit_;
    };

    class NumericError : public Error
    {
    public:
        using Error::Error;
    };

    class InsufficientDataError : public Error
    {
    public:
        using Error::Error;
    };

    /// More unknowns than grid nodes; columns cannot be independent.
    class ResolutionError : public Error
    {
    public:
        using Error::Error;
    };

    class ConfigError : public Error
    {
    public:
        using Error::Error;
    };
}
